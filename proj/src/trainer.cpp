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

#include "embstack/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>

#include <json.hpp>

#include "embstack/columnio.hpp"
#include "embstack/feature_engine.hpp"
#include "embstack/safetensors.hpp"
#include "embstack/segment.hpp"

namespace embstack {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  const auto bytes = safetensors::read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) {
  safetensors::write_bytes(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

FeatureKind parse_kind(const std::string& s) {
  if (s == "ids") return FeatureKind::kIds;
  if (s == "hash") return FeatureKind::kHash;
  if (s == "bucketize") return FeatureKind::kBucketize;
  if (s == "cross") return FeatureKind::kCross;
  fail(ErrorCode::kInvalidArgument, "unknown feature kind '" + s + "'");
}

AdamConfig parse_adam(const json& j, AdamConfig cfg) {
  cfg.lr = j.value("lr", cfg.lr);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.eps = j.value("eps", cfg.eps);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  const auto variant = j.value("variant", std::string("adam"));
  require(variant == "adam" || variant == "adamw", ErrorCode::kInvalidArgument,
          "unknown optimizer variant '" + variant + "'");
  cfg.variant = variant == "adamw" ? AdamVariant::kAdamW : AdamVariant::kAdam;
  return cfg;
}

}  // namespace

void TrainConfig::validate() const {
  require(steps >= 0, ErrorCode::kInvalidArgument, "config: steps must be >= 0");
  require(num_shards >= 1, ErrorCode::kInvalidArgument, "config: num_shards must be >= 1");
  require(balance_shards >= 1, ErrorCode::kInvalidArgument, "config: balance_shards must be >= 1");
  require(batch_rows >= 1 && eval_rows >= 1, ErrorCode::kInvalidArgument, "config: batch sizes must be >= 1");
  require(prefetch_depth >= 0, ErrorCode::kInvalidArgument, "config: prefetch_depth must be >= 0");
  require(eval_every >= 0 && evict_every >= 0, ErrorCode::kInvalidArgument,
          "config: eval_every and evict_every must be >= 0");
  require(evict_threshold >= 0, ErrorCode::kInvalidArgument, "config: evict_threshold must be >= 0");
  require(checkpoint_files >= 1, ErrorCode::kInvalidArgument, "config: checkpoint_files must be >= 1");
  require(!features.empty(), ErrorCode::kInvalidArgument, "config: no features");
  sparse_optimizer.validate();
  dense_optimizer.validate();
  hardware.validate();
  std::map<std::string, size_t> seen;
  for (size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    require(!f.name.empty() && !seen.contains(f.name), ErrorCode::kInvalidArgument,
            "config: feature names must be unique and non-empty ('" + f.name + "')");
    require(f.dim >= 1, ErrorCode::kInvalidArgument, "config: feature '" + f.name + "': dim must be >= 1");
    require(f.modulus >= 0 && f.max_length >= 0, ErrorCode::kInvalidArgument,
            "config: feature '" + f.name + "': modulus and max_length must be >= 0");
    if (f.kind == FeatureKind::kCross) {
      require(f.inputs.size() == 2, ErrorCode::kInvalidArgument,
              "config: cross feature '" + f.name + "' needs two inputs");
      for (const auto& in : f.inputs) {
        require(seen.contains(in), ErrorCode::kInvalidArgument,
                "config: cross feature '" + f.name + "': input '" + in + "' must be an earlier feature");
      }
    } else {
      require(!f.column.empty(), ErrorCode::kInvalidArgument, "config: feature '" + f.name + "' has no column");
    }
    if (f.kind == FeatureKind::kBucketize) Boundaries{f.boundaries};
    seen.emplace(f.name, i);
  }
}

TrainConfig TrainConfig::toy() {
  TrainConfig cfg;
  cfg.eval_every = 50;
  cfg.evict_every = 25;
  cfg.evict_threshold = 24;
  const auto feature = [](std::string name, FeatureKind kind, int64_t dim, int64_t modulus) {
    FeatureSpec f;
    f.column = name;
    f.name = std::move(name);
    f.kind = kind;
    f.dim = dim;
    f.modulus = modulus;
    return f;
  };
  cfg.features.push_back(feature("user", FeatureKind::kIds, 8, 100003));
  cfg.features.push_back(feature("item_seq", FeatureKind::kIds, 16, 0));
  cfg.features.back().max_length = 50;
  cfg.features.push_back(feature("query", FeatureKind::kHash, 8, int64_t{1} << 20));
  cfg.features.push_back(feature("price", FeatureKind::kBucketize, 8, 0));
  cfg.features.back().boundaries = {10, 20, 30, 40, 50, 60, 70, 80, 90};
  cfg.features.push_back(feature("user_x_price", FeatureKind::kCross, 16, int64_t{1} << 20));
  cfg.features.back().column.clear();
  cfg.features.back().inputs = {"user", "price"};

  return cfg;
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig cfg = toy();
  cfg.features.clear();
  try {
    const json j = json::parse(text);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.num_shards = j.value("num_shards", cfg.num_shards);
    cfg.batch_rows = j.value("batch_rows", cfg.batch_rows);
    cfg.prefetch_depth = j.value("prefetch_depth", cfg.prefetch_depth);
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    cfg.eval_rows = j.value("eval_rows", cfg.eval_rows);
    cfg.evict_every = j.value("evict_every", cfg.evict_every);
    if (j.contains("evict_threshold") && !j.at("evict_threshold").is_null()) {
      cfg.evict_threshold = j.at("evict_threshold").get<int64_t>();
    }
    cfg.balance_shards = j.value("balance_shards", cfg.balance_shards);
    cfg.block_size = j.value("block_size", cfg.block_size);
    cfg.checkpoint_files = j.value("checkpoint_files", cfg.checkpoint_files);
    const auto exchange = j.value("exchange", std::string("threaded"));
    require(exchange == "threaded" || exchange == "sequential", ErrorCode::kInvalidArgument,
            "config: exchange must be 'threaded' or 'sequential'");
    cfg.exchange = exchange == "threaded" ? ExchangeMode::kThreaded : ExchangeMode::kSequential;
    if (j.contains("sparse_optimizer")) cfg.sparse_optimizer = parse_adam(j.at("sparse_optimizer"), cfg.sparse_optimizer);
    if (j.contains("dense_optimizer")) cfg.dense_optimizer = parse_adam(j.at("dense_optimizer"), cfg.dense_optimizer);
    cfg.label_column = j.value("label_column", cfg.label_column);
    for (const auto& f : j.at("features")) {
      FeatureSpec spec;
      spec.name = f.at("name").get<std::string>();
      spec.kind = parse_kind(f.value("kind", std::string("ids")));
      spec.column = f.value("column", spec.kind == FeatureKind::kCross ? std::string() : spec.name);
      spec.inputs = f.value("inputs", std::vector<std::string>{});
      spec.dim = f.value("dim", spec.dim);
      spec.modulus = f.value("modulus", spec.modulus);
      spec.boundaries = f.value("boundaries", std::vector<float>{});
      spec.max_length = f.value("max_length", spec.max_length);
      cfg.features.push_back(std::move(spec));
    }
    if (j.contains("data")) cfg.data = datagen::DataSpec::from_json(j.at("data").dump());
    if (j.contains("dataset")) cfg.dataset = j.at("dataset").get<std::string>();
    if (j.contains("eval_dataset")) cfg.eval_dataset = j.at("eval_dataset").get<std::string>();
    if (j.contains("hardware")) cfg.hardware = roofline::HardwareSpec::from_json(j.at("hardware").dump());
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const fs::path& path) { return from_json(read_text(path)); }

std::string metrics_csv(const std::vector<StepMetrics>& metrics) {
  std::string out = "step,loss,unique_ids,imbalance,eval_loss,evicted\n";
  char buf[160];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%lld,%.6f,", static_cast<long long>(m.step), m.loss,
                  static_cast<long long>(m.unique_ids), m.imbalance);
    out += buf;
    if (m.eval_loss) {
      std::snprintf(buf, sizeof buf, "%.17g", *m.eval_loss);
      out += buf;
    }
    out += "," + std::to_string(m.evicted) + "\n";
  }
  return out;
}

namespace {

template <typename T>
const Ragged<T>& column_as(const columnio::Batch& batch, const std::string& column, const std::string& feature) {
  const auto it = batch.columns.find(column);
  require(it != batch.columns.end(), ErrorCode::kFormat,
          "feature '" + feature + "': dataset has no column '" + column + "'");
  const auto* data = std::get_if<Ragged<T>>(&it->second);
  require(data != nullptr, ErrorCode::kFormat, "feature '" + feature + "': column '" + column + "' has the wrong dtype");
  return *data;
}

class FeaturePipeline {
 public:
  explicit FeaturePipeline(const std::vector<FeatureSpec>& features) : features_(features) {
    std::vector<int64_t> moduli;
    std::vector<Boundaries> boundaries;
    for (size_t i = 0; i < features_.size(); ++i) {
      const auto& f = features_[i];
      index_.emplace(f.name, i);
      if ((f.kind == FeatureKind::kIds || f.kind == FeatureKind::kHash) && f.modulus > 0) {
        mod_features_.push_back(i);
        moduli.push_back(f.modulus);
      } else if (f.kind == FeatureKind::kBucketize) {
        bucket_features_.push_back(i);
        boundaries.emplace_back(f.boundaries);
      }
    }
    if (!moduli.empty()) mod_plan_ = std::make_unique<FusedPlan>(FusedPlan::for_mod(std::move(moduli)));
    if (!boundaries.empty()) {
      bucket_plan_ = std::make_unique<FusedPlan>(FusedPlan::for_bucketize(std::move(boundaries)));
    }
  }

  std::vector<std::string> columns() const {
    std::vector<std::string> out;
    for (const auto& f : features_) {
      if (f.kind != FeatureKind::kCross) out.push_back(f.column);
    }
    return out;
  }

  std::vector<RaggedIds> apply(const columnio::Batch& batch) const {
    std::vector<RaggedIds> out(features_.size());
    std::vector<RaggedIds> mod_inputs;
    std::vector<RaggedFloats> bucket_inputs;
    for (size_t i = 0; i < features_.size(); ++i) {
      const auto& f = features_[i];
      RaggedIds ids;
      switch (f.kind) {
        case FeatureKind::kIds:
          ids = column_as<int64_t>(batch, f.column, f.name);
          break;
        case FeatureKind::kHash:
          ids = hash_feature(column_as<std::string>(batch, f.column, f.name));
          break;
        case FeatureKind::kBucketize:
          bucket_inputs.push_back(column_as<float>(batch, f.column, f.name));
          continue;
        case FeatureKind::kCross:
          continue;
      }
      if (f.modulus > 0) {
        mod_inputs.push_back(std::move(ids));
      } else {
        out[i] = std::move(ids);
      }
    }
    if (mod_plan_) {
      auto folded = fused_mod(*mod_plan_, mod_inputs);
      for (size_t k = 0; k < folded.size(); ++k) out[mod_features_[k]] = std::move(folded[k]);
    }
    if (bucket_plan_) {
      auto buckets = fused_bucketize(*bucket_plan_, bucket_inputs);
      for (size_t k = 0; k < buckets.size(); ++k) out[bucket_features_[k]] = std::move(buckets[k]);
    }
    for (size_t i = 0; i < features_.size(); ++i) {
      const auto& f = features_[i];
      if (f.kind == FeatureKind::kCross) {
        out[i] = cross(out[index_.at(f.inputs[0])], out[index_.at(f.inputs[1])]);
        if (f.modulus > 0) out[i] = mod_transform(out[i], f.modulus);
      }
    }
    for (size_t i = 0; i < features_.size(); ++i) {
      if (features_[i].max_length > 0) out[i] = truncate(out[i], features_[i].max_length);
    }
    return out;
  }

 private:
  const std::vector<FeatureSpec>& features_;
  std::map<std::string, size_t> index_;
  std::vector<size_t> mod_features_;
  std::vector<size_t> bucket_features_;
  std::unique_ptr<FusedPlan> mod_plan_;
  std::unique_ptr<FusedPlan> bucket_plan_;
};

class Profiler {
 public:
  template <typename Fn>
  auto run(const std::string& name, const roofline::Traffic& traffic, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      Profiler* self;
      std::string name;
      roofline::Traffic traffic;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
        self->add(name, traffic, dt.count());
      }
    } record{this, name, traffic, start};
    return fn();
  }

  std::vector<roofline::OpProfile> profiles() const {
    std::vector<roofline::OpProfile> out;
    for (const auto& name : order_) {
      auto p = by_name_.at(name);
      p.elapsed = std::max(p.elapsed, 1e-9);
      out.push_back(p);
    }
    return out;
  }

  void add(const std::string& name, const roofline::Traffic& t, double seconds) {
    auto [it, inserted] = by_name_.try_emplace(name);
    if (inserted) {
      order_.push_back(name);
      it->second.name = name;
      it->second.dispatches = 0;
    }
    auto& p = it->second;
    p.bytes_read += t.bytes_read;
    p.bytes_written += t.bytes_written;
    p.flops += t.flops;
    p.elapsed += seconds;
    p.dispatches += 1;
  }

 private:

  std::vector<std::string> order_;
  std::map<std::string, roofline::OpProfile> by_name_;
};

struct Forward {
  std::vector<std::vector<int64_t>> keys;  // per logical table
  std::vector<int64_t> start;              // per feature, into keys[table_of]
  Eigen::MatrixXd x;
};

class Model {
 public:
  Model(const TrainConfig& cfg) : cfg_(cfg), plan_(cfg.num_shards) {
    std::vector<TableSpec> specs;
    for (const auto& f : cfg.features) specs.push_back({f.name, f.dim});
    TableOptions options;
    options.block_size = cfg.block_size;
    options.seed = cfg.seed;
    options.evict_threshold = cfg.evict_threshold;
    tables_ = merge_tables_by_dim(specs, cfg.num_shards, options);
    Eigen::Index col = 0;
    for (const auto& f : cfg.features) {
      for (size_t t = 0; t < tables_.size(); ++t) {
        if (tables_[t].has_member(f.name)) table_of_.push_back(t);
      }
      column_.push_back(col);
      col += f.dim;
    }
    w_ = Eigen::VectorXd::Zero(col);
    m_ = Eigen::VectorXd::Zero(col);
    v_ = Eigen::VectorXd::Zero(col);
  }

  std::vector<LogicalTable>& tables() { return tables_; }

  Forward forward(const std::vector<RaggedIds>& features, int64_t rows, int64_t step, Profiler& prof) {
    Forward fw;
    fw.keys.resize(tables_.size());
    for (size_t f = 0; f < features.size(); ++f) {
      auto& keys = fw.keys[table_of_[f]];
      fw.start.push_back(static_cast<int64_t>(keys.size()));
      const auto k = tables_[table_of_[f]].keys(cfg_.features[f].name, features[f].values());
      keys.insert(keys.end(), k.begin(), k.end());
    }
    std::vector<MatrixF> looked_up(tables_.size());
    for (size_t t = 0; t < tables_.size(); ++t) {
      const auto n = static_cast<int64_t>(fw.keys[t].size());
      looked_up[t] = prof.run("gather", roofline::traffic::gather(n, tables_[t].dim()), [&] {
        return all_to_all_lookup(tables_[t], fw.keys[t], plan_, step, cfg_.exchange);
      });
    }
    fw.x = Eigen::MatrixXd::Zero(rows, w_.size());
    for (size_t f = 0; f < features.size(); ++f) {
      const auto& ids = features[f];
      const auto dim = cfg_.features[f].dim;
      const auto block = looked_up[table_of_[f]].middleRows(fw.start[f], ids.num_elements());
      const auto traffic = roofline::traffic::segment_reduce(ids.num_elements(), dim, ids.num_rows(), true);
      const MatrixF pooled = prof.run("reduce", traffic, [&] {
        return segment_reduce(block, ids.row_offsets(), ReduceMode::kMean);
      });
      fw.x.middleCols(column_[f], dim) = pooled.cast<double>();
    }
    return fw;
  }

  static double log_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
    double total = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    return z.size() == 0 ? 0.0 : total / static_cast<double>(z.size());
  }

  double evaluate(const std::vector<RaggedIds>& features, const Eigen::VectorXd& y, int64_t step, Profiler& prof) {
    const Forward fw = forward(features, y.size(), step, prof);
    return log_loss(fw.x * w_, y);
  }

  double train_step(const std::vector<RaggedIds>& features, const Eigen::VectorXd& y, int64_t step,
                    const ShardPlan& balance, StepMetrics& metrics, Profiler& prof) {
    const Forward fw = forward(features, y.size(), step, prof);
    std::vector<int64_t> load(static_cast<size_t>(balance.num_shards()), 0);
    for (const auto& keys : fw.keys) {
      const auto start = std::chrono::steady_clock::now();
      const auto part = unique_partition(keys, balance);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      prof.add("ids partition", roofline::traffic::ids_partition(static_cast<int64_t>(keys.size()), part.num_unique()),
               dt.count());
      metrics.unique_ids += part.num_unique();
      for (size_t s = 0; s < load.size(); ++s) load[s] += static_cast<int64_t>(part.shard_ids[s].size());
    }
    if (metrics.unique_ids > 0) {
      const double mean = static_cast<double>(metrics.unique_ids) / static_cast<double>(load.size());
      metrics.imbalance = static_cast<double>(*std::max_element(load.begin(), load.end())) / mean;
    }
    const Eigen::VectorXd z = fw.x * w_;
    const double loss = log_loss(z, y);
    const auto batch = static_cast<double>(y.size());
    const Eigen::VectorXd dz = ((1.0 / (1.0 + (-z.array()).exp())) - y.array()).matrix() / batch;

    std::vector<MatrixF> grads(tables_.size());
    for (size_t t = 0; t < tables_.size(); ++t) {
      grads[t] = MatrixF::Zero(static_cast<Eigen::Index>(fw.keys[t].size()), tables_[t].dim());
    }
    for (size_t f = 0; f < features.size(); ++f) {
      const auto& offsets = features[f].row_offsets();
      const auto dim = cfg_.features[f].dim;
      const Eigen::VectorXd wf = w_.segment(column_[f], dim);
      auto& g = grads[table_of_[f]];
      for (int64_t r = 0; r + 1 < static_cast<int64_t>(offsets.size()); ++r) {
        const int64_t len = offsets[r + 1] - offsets[r];
        if (len == 0) continue;
        const Eigen::RowVectorXf row = (wf * (dz[r] / static_cast<double>(len))).transpose().cast<float>();
        for (int64_t e = offsets[r]; e < offsets[r + 1]; ++e) g.row(fw.start[f] + e) = row;
      }
    }
    for (size_t t = 0; t < tables_.size(); ++t) {
      const auto n = static_cast<int64_t>(fw.keys[t].size());
      prof.run("scatter", roofline::traffic::scatter(n, tables_[t].dim()), [&] {
        all_to_all_grad_update(tables_[t], fw.keys[t], grads[t], plan_, cfg_.sparse_optimizer, step,
                               cfg_.exchange);
        return 0;
      });
    }

    const Eigen::VectorXd gw = fw.x.transpose() * dz;
    const auto& opt = cfg_.dense_optimizer;
    m_ = opt.beta1 * m_ + (1 - opt.beta1) * gw;
    v_ = opt.beta2 * v_ + (1 - opt.beta2) * gw.cwiseProduct(gw);
    const double c1 = 1 - std::pow(opt.beta1, static_cast<double>(step));
    const double c2 = 1 - std::pow(opt.beta2, static_cast<double>(step));
    if (opt.variant == AdamVariant::kAdamW && opt.weight_decay != 0) w_ *= 1 - opt.lr * opt.weight_decay;
    w_.array() -= opt.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt.eps);
    return loss;
  }

 private:
  const TrainConfig& cfg_;
  ShardPlan plan_;
  std::vector<LogicalTable> tables_;
  std::vector<size_t> table_of_;
  std::vector<Eigen::Index> column_;
  Eigen::VectorXd w_, m_, v_;
};

Eigen::VectorXd labels_of(const columnio::Batch& batch, const std::string& column) {
  const auto& labels = column_as<int64_t>(batch, column, "label");
  require(labels.num_elements() == batch.num_rows, ErrorCode::kFormat,
          "label column '" + column + "' must hold one value per row");
  Eigen::VectorXd y(batch.num_rows);
  for (int64_t i = 0; i < batch.num_rows; ++i) {
    const int64_t v = labels.values()[static_cast<size_t>(i)];
    require(v == 0 || v == 1, ErrorCode::kFormat, "label column '" + column + "' must hold 0/1 values");
    y[i] = static_cast<double>(v);
  }
  return y;
}

}  // namespace

TrainResult train_toy(const TrainConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);

  fs::path train_path;
  if (cfg.dataset) {
    train_path = *cfg.dataset;
  } else {
    train_path = out_dir / "train.rcol";
    datagen::generate_dataset(cfg.data, cfg.seed, train_path);
  }
  std::optional<fs::path> eval_path;
  if (cfg.eval_every > 0) {
    if (cfg.eval_dataset) {
      eval_path = *cfg.eval_dataset;
    } else {
      datagen::DataSpec spec = cfg.data;
      spec.rows = cfg.eval_rows;
      eval_path = out_dir / "eval.rcol";
      datagen::generate_dataset(spec, mix64(cfg.seed ^ 0x6576616cULL), *eval_path);
    }
  }

  FeaturePipeline pipeline(cfg.features);
  columnio::ReaderOptions options;
  options.batch_rows = cfg.batch_rows;
  options.prefetch_depth = cfg.prefetch_depth;
  options.columns = pipeline.columns();
  options.columns.push_back(cfg.label_column);
  std::sort(options.columns.begin(), options.columns.end());
  options.columns.erase(std::unique(options.columns.begin(), options.columns.end()), options.columns.end());

  std::optional<columnio::Batch> eval_batch;
  if (eval_path) {
    auto eval_options = options;
    eval_options.batch_rows = cfg.eval_rows;
    eval_options.prefetch_depth = 0;
    eval_batch = columnio::open_reader({*eval_path}, eval_options)->next();
  }

  Model model(cfg);
  Profiler prof;
  const ShardPlan balance(cfg.balance_shards);
  TrainResult result;
  auto reader = columnio::open_reader({train_path}, options);

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    auto batch = reader->next();
    if (!batch) {
      reader = columnio::open_reader({train_path}, options);
      batch = reader->next();
      require(batch.has_value(), ErrorCode::kInvalidArgument, train_path.string() + ": dataset has no rows");
    }
    const Eigen::VectorXd y = labels_of(*batch, cfg.label_column);
    const auto features = pipeline.apply(*batch);

    StepMetrics m;
    m.step = step;
    m.loss = model.train_step(features, y, step, balance, m, prof);

    if (cfg.evict_every > 0 && step % cfg.evict_every == 0) {
      for (auto& table : model.tables()) {
        for (auto& shard : table.shards()) m.evicted += evict(shard, step);
      }
    }
    if (eval_batch && step % cfg.eval_every == 0) {
      m.eval_loss = model.evaluate(pipeline.apply(*eval_batch), labels_of(*eval_batch, cfg.label_column), step, prof);
    }
    result.metrics.push_back(m);
  }

  std::vector<TableSnapshot> snapshots;
  for (const auto& table : model.tables()) snapshots.push_back(TableSnapshot::of(table, cfg.steps));
  result.checkpoint = save_sharded(snapshots, out_dir / "checkpoint", cfg.checkpoint_files);
  result.profiles = prof.profiles();
  write_text(out_dir / "metrics.csv", metrics_csv(result.metrics));
  write_text(out_dir / "roofline.csv", roofline::emit_report(result.profiles, cfg.hardware, roofline::ReportFormat::kCsv));
  return result;
}

}  // namespace embstack
