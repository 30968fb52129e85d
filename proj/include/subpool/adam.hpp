// Copyright 2026 The subpool Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "subpool/model.hpp"

namespace subpool {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Last epoch (1-based) trained at the base rate.
  std::size_t decay_start = 150;
  /// The rate has shrunk by this factor `decay_span` epochs after decay_start.
  double decay_factor = 0.1;
  std::size_t decay_span = 150;

  /// base for epoch <= decay_start, else
  /// base * factor^((epoch - decay_start) / decay_span).
  double rate_at(std::size_t epoch) const;
  void validate() const;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;   // one per parameter, same shape
  std::vector<Matrix> second_moment;
};

AdamState make_adam_state(const ParamStore& params, const AdamConfig& config);

/// One bias-corrected Adam update at the learning rate of `epoch`.
/// Parameters with lr_scale 0 are left untouched. Throws NumericError,
/// before modifying anything, if any gradient is non-finite.
void adam_step(ParamStore& params, AdamState& state, std::size_t epoch);

}  // namespace subpool
