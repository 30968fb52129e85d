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

#include "subpool/adam.hpp"

#include <cmath>
#include <string>

#include "subpool/error.hpp"

namespace subpool {

double AdamConfig::rate_at(std::size_t epoch) const {
  if (epoch <= decay_start) return learning_rate;
  const double progress = static_cast<double>(epoch - decay_start) / static_cast<double>(decay_span);
  return learning_rate * std::pow(decay_factor, progress);
}

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw InvalidArgument("adam: learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("adam: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("adam: epsilon must be > 0");
  if (!(decay_factor > 0.0)) throw InvalidArgument("adam: decay factor must be > 0");
  if (decay_span == 0) throw InvalidArgument("adam: decay span must be >= 1");
}

AdamState make_adam_state(const ParamStore& params, const AdamConfig& config) {
  config.validate();
  AdamState s;
  s.config = config;
  for (const auto& p : params.params()) {
    s.first_moment.emplace_back(p.value.rows(), p.value.cols());
    s.second_moment.emplace_back(p.value.rows(), p.value.cols());
  }
  return s;
}

void adam_step(ParamStore& params, AdamState& state, std::size_t epoch) {
  auto& ps = params.params();
  if (ps.size() != state.first_moment.size()) throw InvalidArgument("adam_step: state does not match parameters");
  for (const auto& p : ps) {
    if (!all_finite(p.grad)) {
      throw NumericError("adam_step: non-finite gradient in " + p.name + ", step aborted");
    }
  }

  ++state.step;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  const double lr = cfg.rate_at(epoch);

  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto value = ps[i].value.data();
    auto grad = ps[i].grad.data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    const double step = lr * ps[i].lr_scale;
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
      if (step == 0.0) continue;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= step * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace subpool
