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

// Glue between a dataset on disk and a trained model: split, train,
// describe, evaluate, and checkpoint.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "subpool/data_io.hpp"
#include "subpool/model.hpp"
#include "subpool/retrieval_eval.hpp"
#include "subpool/run_config.hpp"
#include "subpool/synthetic.hpp"
#include "subpool/trainer.hpp"

namespace subpool {

/// Network input for one tensor: rank 3 (c, h, w) becomes c x (h*w); rank 2
/// (c, n) is taken as height 1.
Matrix input_matrix(const Tensor& t);

/// The run's model settings with the input shape taken from the data.
/// Throws InvalidArgument if the tensors disagree in shape.
ModelConfig model_for(const RunConfig& config, const Dataset& data);

TrainingSet training_set(const Dataset& data, const DatasetSplit& split);

/// Descriptors of the selected entries, tagged with their manifest paths.
std::vector<Sample> describe_entries(const Dataset& data, const std::vector<std::size_t>& indices,
                                     const ModelConfig& model, const ParamStore& params, std::size_t threads);

struct Experiment {
  DatasetSplit split;
  TrainResult trained;
  EvalReport report;
};

/// Split, train and evaluate on the held-out identities. `config` must be
/// finalized.
Experiment run_experiment(const Dataset& data, const RunConfig& config);

struct Checkpoint {
  RunConfig config;
  ModelConfig model;
  std::vector<int> classes;
  ParamStore params;
  AdamState adam;
};

/// A directory holding run.cfg, model.txt and one tensor file per
/// parameter and Adam moment. Values are stored as float32.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace subpool
