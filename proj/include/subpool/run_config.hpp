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

// Flat `key = value` run configuration. Every option is one line; `#`
// starts a comment. Unknown keys are rejected.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "subpool/adam.hpp"
#include "subpool/data_io.hpp"
#include "subpool/error.hpp"
#include "subpool/model.hpp"
#include "subpool/retrieval_eval.hpp"
#include "subpool/synthetic.hpp"
#include "subpool/trainer.hpp"

namespace subpool {

/// Raised for unknown keys and unparseable or out-of-range values.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string data;  // manifest path
  std::string out;   // output directory
  SyntheticSpec synth;
  SplitSpec split;
  ModelConfig model;
  AdamConfig adam;
  std::size_t decay_span = 0;  // 0 = epochs - decay_start
  TrainConfig train;
  EvalProtocol eval;

  RunConfig();

  /// "desk" (the defaults) or "full" (lr 2e-4, 300 epochs, decay after
  /// epoch 150, 32 x 4 batches).
  static RunConfig preset(const std::string& name);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  static std::string describe_key(const std::string& key);

  /// Applies `key = value` lines on top of the current values. Errors cite
  /// the line number.
  void apply_text(const std::string& text);
  void apply_file(const std::string& path);
  std::string to_text() const;

  /// Pushes the shared seed and derived settings into the sub-configs and
  /// validates them.
  void finalize();
};

}  // namespace subpool
