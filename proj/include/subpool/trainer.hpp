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
#include <functional>
#include <utility>
#include <vector>

#include "subpool/adam.hpp"
#include "subpool/model.hpp"
#include "subpool/retrieval_eval.hpp"

namespace subpool {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_ids = 8;        // P
  std::size_t batch_instances = 4;  // K
  std::size_t steps_per_epoch = 0;  // 0 = max(1, eligible identities / P)
  std::uint64_t seed = 7;
  bool freeze_conv = false;
  std::size_t eval_every = 0;  // epochs between evaluation snapshots, 0 = off
};

/// Training inputs (C0 x H0*W0 each) with their person ids.
struct TrainingSet {
  std::vector<Matrix> inputs;
  std::vector<int> person_ids;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_id = 0.0;   // mean over the epoch's steps
  double loss_tl = 0.0;
  double loss_total = 0.0;
  double learning_rate = 0.0;
};

using Evaluator = std::function<EvalReport(const ModelConfig&, const ParamStore&)>;

struct TrainResult {
  ModelConfig model;       // num_classes set to the training identity count
  std::vector<int> classes;  // person id of each classifier row
  ParamStore params;
  AdamState adam;
  std::vector<EpochLog> log;
  std::size_t jitter_count = 0;
  std::vector<std::pair<std::size_t, EvalReport>> snapshots;
};

/// P x K mini-batch training with Adam. Deterministic for a given seed:
/// parameters are initialized from `seed`, batches are drawn from a second
/// generator derived from it. Throws InvalidArgument before any step if
/// fewer than P identities have K images, NumericError on a non-finite loss.
TrainResult train(const TrainingSet& data, ModelConfig model, const AdamConfig& adam, const TrainConfig& config,
                  const Evaluator& evaluator = {});

/// Seed used for parameter initialization by train().
std::uint64_t init_seed(std::uint64_t seed);

}  // namespace subpool
