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

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_set>

#include "embstack/embedding.hpp"

namespace embstack {

enum class AdamVariant { kAdam, kAdamW };

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  AdamVariant variant = AdamVariant::kAdam;

  void validate() const {
    require(lr >= 0, ErrorCode::kInvalidArgument, "adam: lr must be >= 0");
    require(beta1 >= 0 && beta1 < 1, ErrorCode::kInvalidArgument, "adam: beta1 must be in [0, 1)");
    require(beta2 >= 0 && beta2 < 1, ErrorCode::kInvalidArgument, "adam: beta2 must be in [0, 1)");
    require(eps > 0, ErrorCode::kInvalidArgument, "adam: eps must be > 0");
    require(weight_decay >= 0, ErrorCode::kInvalidArgument, "adam: weight_decay must be >= 0");
  }
};

/// Lazy Adam/AdamW over the rows at `offsets`; all other rows are left
/// untouched. Bias correction uses the global step `step` shared by every
/// row. Offsets must be distinct (pre-aggregate duplicate gradients).
template <typename Scalar, typename Derived>
void sparse_adam_step(BasicBlockStore<Scalar>& store, std::span<const int64_t> offsets,
                      const Eigen::MatrixBase<Derived>& grads, const AdamConfig& cfg, int64_t step) {
  cfg.validate();
  require(step >= 1, ErrorCode::kInvalidArgument, "adam: step must be >= 1");
  require(grads.rows() == static_cast<Eigen::Index>(offsets.size()) && grads.cols() == store.dim(),
          ErrorCode::kInvalidArgument, "adam: gradient shape does not match offsets x dim");
  {
    std::unordered_set<int64_t> seen;
    seen.reserve(offsets.size());
    for (int64_t s : offsets) {
      require(s >= 0 && s < store.capacity(), ErrorCode::kOutOfRange,
              "adam: slot " + std::to_string(s) + " out of range");
      require(seen.insert(s).second, ErrorCode::kInvalidArgument,
              "adam: duplicate slot " + std::to_string(s));
    }
  }
  record_invocation(Module::kOptimizer);

  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto eps = static_cast<Scalar>(cfg.eps);
  const auto decay = static_cast<Scalar>(cfg.lr * cfg.weight_decay);
  const auto bc1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
  const auto bc2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
  const bool decoupled = cfg.variant == AdamVariant::kAdamW && cfg.weight_decay != 0.0;

  for (size_t i = 0; i < offsets.size(); ++i) {
    const int64_t s = offsets[i];
    auto prow = store.param(s);
    auto mrow = store.m(s);
    auto vrow = store.v(s);
    auto p = prow.array();
    auto m = mrow.array();
    auto v = vrow.array();
    const auto g = grads.row(static_cast<Eigen::Index>(i)).array();
    if (decoupled) p -= decay * p;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
  }
}

}  // namespace embstack
