/*
 * Copyright 2026 The embstack Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "embstack/sharding.hpp"

#include <algorithm>
#include <barrier>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace embstack {

int64_t PartitionResult::num_unique() const noexcept {
  int64_t n = 0;
  for (const auto& s : shard_ids) n += static_cast<int64_t>(s.size());
  return n;
}

std::vector<int64_t> PartitionResult::reconstruct() const {
  std::vector<int64_t> out;
  out.reserve(inverse_index.size());
  for (const auto& pos : inverse_index) out.push_back(shard_ids[pos.shard][pos.index]);
  return out;
}

PartitionResult unique_partition(std::span<const int64_t> ids, const ShardPlan& plan) {
  record_invocation(Module::kSharding);
  const auto num_shards = static_cast<size_t>(plan.num_shards());
  PartitionResult out;
  out.shard_ids.resize(num_shards);
  out.first_position.resize(num_shards);
  out.inverse_index.reserve(ids.size());
  std::unordered_map<int64_t, ShardPosition> seen;
  seen.reserve(ids.size());
  for (size_t p = 0; p < ids.size(); ++p) {
    const int64_t id = ids[p];
    auto [it, inserted] = seen.try_emplace(id);
    if (inserted) {
      const int64_t shard = plan.shard_of(id);
      it->second = {shard, static_cast<int64_t>(out.shard_ids[shard].size())};
      out.shard_ids[shard].push_back(id);
      out.first_position[shard].push_back(static_cast<int64_t>(p));
    }
    out.inverse_index.push_back(it->second);
  }
  return out;
}

int64_t namespaced_key(std::string_view member, int64_t id) noexcept {
  return static_cast<int64_t>(mix64(static_cast<uint64_t>(id) ^ fnv1a64(member)));
}

LogicalTable::LogicalTable(std::string name, int64_t dim, std::vector<std::string> members,
                           int64_t num_shards, const TableOptions& options)
    : name_(std::move(name)), dim_(dim), members_(std::move(members)) {
  require(num_shards >= 1, ErrorCode::kInvalidArgument, "logical table: num_shards must be >= 1");
  TableOptions shard_options = options;
  shard_options.dim = dim;
  shards_.reserve(static_cast<size_t>(num_shards));
  for (int64_t i = 0; i < num_shards; ++i) {
    shards_.emplace_back(name_ + "/shard" + std::to_string(i), shard_options);
  }
}

LogicalTable::LogicalTable(std::string name, int64_t dim, std::vector<std::string> members,
                           std::vector<EmbeddingTable> shards)
    : name_(std::move(name)), dim_(dim), members_(std::move(members)), shards_(std::move(shards)) {
  require(!shards_.empty(), ErrorCode::kInvalidArgument, "logical table: needs at least one shard");
  for (const auto& s : shards_) {
    require(s.dim() == dim_, ErrorCode::kInvalidArgument, "logical table " + name_ + ": shard dim mismatch");
  }
}

bool LogicalTable::has_member(std::string_view member) const {
  return std::find(members_.begin(), members_.end(), member) != members_.end();
}

int64_t LogicalTable::key(std::string_view member, int64_t id) const {
  require(has_member(member), ErrorCode::kInvalidArgument,
          "logical table " + name_ + ": unknown member table " + std::string(member));
  return namespaced_key(member, id);
}

std::vector<int64_t> LogicalTable::keys(std::string_view member, std::span<const int64_t> ids) const {
  require(has_member(member), ErrorCode::kInvalidArgument,
          "logical table " + name_ + ": unknown member table " + std::string(member));
  std::vector<int64_t> out(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) out[i] = namespaced_key(member, ids[i]);
  return out;
}

int64_t LogicalTable::size() const {
  int64_t n = 0;
  for (const auto& s : shards_) n += s.size();
  return n;
}

std::vector<LogicalTable> merge_tables_by_dim(const std::vector<TableSpec>& tables, int64_t num_shards,
                                              const TableOptions& options) {
  record_invocation(Module::kSharding);
  std::unordered_set<std::string> names;
  std::vector<int64_t> dims;
  std::vector<std::vector<std::string>> groups;
  for (const auto& t : tables) {
    require(names.insert(t.name).second, ErrorCode::kInvalidArgument,
            "merge_tables_by_dim: duplicate table name " + t.name);
    require(t.dim >= 1, ErrorCode::kInvalidArgument, "merge_tables_by_dim: table " + t.name + " has dim < 1");
    auto it = std::find(dims.begin(), dims.end(), t.dim);
    if (it == dims.end()) {
      dims.push_back(t.dim);
      groups.push_back({t.name});
    } else {
      groups[it - dims.begin()].push_back(t.name);
    }
  }
  std::vector<LogicalTable> out;
  out.reserve(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) {
    out.emplace_back("dim" + std::to_string(dims[i]), dims[i], std::move(groups[i]), num_shards, options);
  }
  return out;
}

namespace {

// Request routing for one exchange. The batch is split into contiguous
// per-worker slices; each distinct key is requested by the worker whose
// slice holds its first occurrence. Since every shard list is ordered by
// first occurrence, worker w's requests to shard d are the contiguous range
// [begin[d][w], begin[d][w + 1]) of that list.
struct Routing {
  PartitionResult part;
  int64_t workers = 1;
  int64_t batch = 0;
  std::vector<std::vector<int64_t>> begin;

  int64_t source_of_position(int64_t p) const { return p * workers / batch; }
};

Routing route(std::span<const int64_t> keys, const ShardPlan& plan) {
  Routing r;
  r.part = unique_partition(keys, plan);
  r.workers = plan.num_shards();
  r.batch = static_cast<int64_t>(keys.size());
  r.begin.assign(static_cast<size_t>(r.workers), std::vector<int64_t>(static_cast<size_t>(r.workers) + 1, 0));
  for (int64_t d = 0; d < r.workers; ++d) {
    const auto& first = r.part.first_position[d];
    auto& b = r.begin[d];
    for (int64_t w = 0; w <= r.workers; ++w) {
      // First entry whose source worker is >= w.
      b[w] = std::partition_point(first.begin(), first.end(),
                                  [&](int64_t p) { return r.source_of_position(p) < w; }) -
             first.begin();
    }
  }
  return r;
}

// Runs the per-worker phases of an exchange. Threaded mode separates
// phases with a barrier; a failure in any worker is rethrown after join.
void run_exchange(int64_t workers, ExchangeMode mode,
                  const std::vector<std::function<void(int64_t)>>& phases) {
  if (mode == ExchangeMode::kSequential || workers == 1) {
    for (const auto& phase : phases) {
      for (int64_t w = 0; w < workers; ++w) phase(w);
    }
    return;
  }
  std::barrier sync(static_cast<std::ptrdiff_t>(workers));
  std::mutex error_mu;
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(workers));
  for (int64_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (const auto& phase : phases) {
        if (!failed.load()) {
          try {
            phase(w);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            failed.store(true);
          }
        }
        sync.arrive_and_wait();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

void check_shards(const LogicalTable& table, const ShardPlan& plan) {
  require(table.num_shards() == plan.num_shards(), ErrorCode::kInvalidArgument,
          "all_to_all: plan has " + std::to_string(plan.num_shards()) + " shards, table " + table.name() +
              " has " + std::to_string(table.num_shards()));
}

}  // namespace

MatrixF all_to_all_lookup(LogicalTable& table, std::span<const int64_t> keys, const ShardPlan& plan,
                          int64_t step, ExchangeMode mode) {
  check_shards(table, plan);
  record_invocation(Module::kSharding);
  const int64_t dim = table.dim();
  MatrixF out(static_cast<Eigen::Index>(keys.size()), dim);
  if (keys.empty()) return out;

  const Routing r = route(keys, plan);
  const int64_t S = r.workers;
  // requests[src][dst] and responses[dst][src]
  std::vector<std::vector<std::vector<int64_t>>> requests(S, std::vector<std::vector<int64_t>>(S));
  std::vector<std::vector<MatrixF>> responses(S, std::vector<MatrixF>(S));

  auto send_requests = [&](int64_t src) {
    for (int64_t d = 0; d < S; ++d) {
      const auto& ids = r.part.shard_ids[d];
      requests[src][d].assign(ids.begin() + r.begin[d][src], ids.begin() + r.begin[d][src + 1]);
    }
  };
  auto serve = [&](int64_t dst) {
    std::vector<int64_t> incoming;
    for (int64_t src = 0; src < S; ++src) {
      incoming.insert(incoming.end(), requests[src][dst].begin(), requests[src][dst].end());
    }
    auto& shard = table.shard(dst);
    const auto offsets = lookup_or_insert(shard, incoming, step);
    const MatrixF rows = gather(shard, offsets);
    Eigen::Index start = 0;
    for (int64_t src = 0; src < S; ++src) {
      const auto n = static_cast<Eigen::Index>(requests[src][dst].size());
      responses[dst][src] = rows.middleRows(start, n);
      start += n;
    }
  };
  auto receive = [&](int64_t src) {
    const int64_t lo = (src * r.batch + S - 1) / S;
    const int64_t hi = ((src + 1) * r.batch + S - 1) / S;
    for (int64_t p = lo; p < hi; ++p) {
      const auto [d, j] = r.part.inverse_index[p];
      const int64_t owner = r.source_of_position(r.part.first_position[d][j]);
      out.row(p) = responses[d][owner].row(j - r.begin[d][owner]);
    }
  };
  run_exchange(S, mode, {send_requests, serve, receive});
  return out;
}

void all_to_all_grad_update(LogicalTable& table, std::span<const int64_t> keys,
                            const Eigen::Ref<const MatrixF>& grads, const ShardPlan& plan,
                            const AdamConfig& cfg, int64_t step, ExchangeMode mode) {
  check_shards(table, plan);
  require(grads.rows() == static_cast<Eigen::Index>(keys.size()) && grads.cols() == table.dim(),
          ErrorCode::kInvalidArgument, "all_to_all_grad_update: gradient shape does not match keys x dim");
  cfg.validate();
  record_invocation(Module::kSharding);
  if (keys.empty()) return;

  const Routing r = route(keys, plan);
  const int64_t S = r.workers;
  const int64_t dim = table.dim();

  // Duplicate occurrences are summed in input order before routing.
  std::vector<MatrixF> summed(S);
  for (int64_t d = 0; d < S; ++d) {
    summed[d] = MatrixF::Zero(static_cast<Eigen::Index>(r.part.shard_ids[d].size()), dim);
  }
  for (size_t p = 0; p < keys.size(); ++p) {
    const auto [d, j] = r.part.inverse_index[p];
    summed[d].row(j) += grads.row(static_cast<Eigen::Index>(p));
  }

  struct Message {
    std::vector<int64_t> ids;
    MatrixF grads;
  };
  std::vector<std::vector<Message>> requests(S, std::vector<Message>(S));

  auto send_requests = [&](int64_t src) {
    for (int64_t d = 0; d < S; ++d) {
      const int64_t lo = r.begin[d][src];
      const int64_t hi = r.begin[d][src + 1];
      const auto& ids = r.part.shard_ids[d];
      requests[src][d].ids.assign(ids.begin() + lo, ids.begin() + hi);
      requests[src][d].grads = summed[d].middleRows(lo, hi - lo);
    }
  };
  auto apply = [&](int64_t dst) {
    std::vector<int64_t> incoming;
    int64_t total = 0;
    for (int64_t src = 0; src < S; ++src) total += static_cast<int64_t>(requests[src][dst].ids.size());
    MatrixF g(total, dim);
    Eigen::Index start = 0;
    for (int64_t src = 0; src < S; ++src) {
      const auto& msg = requests[src][dst];
      incoming.insert(incoming.end(), msg.ids.begin(), msg.ids.end());
      g.middleRows(start, msg.grads.rows()) = msg.grads;
      start += msg.grads.rows();
    }
    auto& shard = table.shard(dst);
    const auto offsets = lookup_or_insert(shard, incoming, step);
    sparse_adam_step(shard.store(), std::span<const int64_t>(offsets), g, cfg, step);
  };
  run_exchange(S, mode, {send_requests, apply});
}

LoadStats load_stats(std::span<const int64_t> ids, const ShardPlan& plan) {
  record_invocation(Module::kSharding);
  LoadStats stats;
  stats.counts.assign(static_cast<size_t>(plan.num_shards()), 0);
  std::unordered_set<int64_t> unique(ids.begin(), ids.end());
  for (int64_t id : unique) ++stats.counts[plan.shard_of(id)];
  if (!unique.empty()) {
    const double mean = static_cast<double>(unique.size()) / static_cast<double>(plan.num_shards());
    const auto max = *std::max_element(stats.counts.begin(), stats.counts.end());
    stats.imbalance = static_cast<double>(max) / mean;
  }
  return stats;
}

}  // namespace embstack
