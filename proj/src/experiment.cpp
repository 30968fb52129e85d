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

#include "subpool/experiment.hpp"

#include <fstream>
#include <sstream>

#include "subpool/error.hpp"

namespace subpool {

namespace fs = std::filesystem;

Matrix input_matrix(const Tensor& t) {
  if (t.dims.size() != 2 && t.dims.size() != 3) {
    throw InvalidArgument("input tensor must have rank 2 or 3, got rank " + std::to_string(t.dims.size()));
  }
  return to_matrix(t);
}

ModelConfig model_for(const RunConfig& config, const Dataset& data) {
  if (data.tensors.empty()) throw InvalidArgument("dataset is empty");
  const auto& dims = data.tensors.front().dims;
  for (std::size_t i = 0; i < data.tensors.size(); ++i) {
    if (data.tensors[i].dims != dims) {
      throw InvalidArgument("tensor " + data.entries[i].path + " differs in shape from " + data.entries[0].path);
    }
  }
  if (dims.size() != 2 && dims.size() != 3) throw InvalidArgument("input tensors must have rank 2 or 3");
  ModelConfig m = config.model;
  m.in_channels = dims[0];
  m.in_height = dims.size() == 3 ? dims[1] : 1;
  m.in_width = dims.back();
  return m;
}

TrainingSet training_set(const Dataset& data, const DatasetSplit& split) {
  TrainingSet set;
  for (std::size_t i : split.train) {
    set.inputs.push_back(input_matrix(data.tensors[i]));
    set.person_ids.push_back(data.entries[i].person_id);
  }
  return set;
}

std::vector<Sample> describe_entries(const Dataset& data, const std::vector<std::size_t>& indices,
                                     const ModelConfig& model, const ParamStore& params, std::size_t threads) {
  std::vector<Matrix> inputs;
  inputs.reserve(indices.size());
  for (std::size_t i : indices) inputs.push_back(input_matrix(data.tensors[i]));
  auto descriptors = describe(inputs, model, params, threads);
  std::vector<Sample> out(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& e = data.entries[indices[j]];
    out[j] = Sample{std::move(descriptors[j]), e.person_id, e.camera_id, e.path};
  }
  return out;
}

Experiment run_experiment(const Dataset& data, const RunConfig& config) {
  Experiment ex;
  ex.split = split_dataset(data.entries, config.split);
  const ModelConfig model = model_for(config, data);
  ex.trained = train(training_set(data, ex.split), model, config.adam, config.train);
  const auto query = describe_entries(data, ex.split.query, ex.trained.model, ex.trained.params, config.eval.threads);
  const auto gallery =
      describe_entries(data, ex.split.gallery, ex.trained.model, ex.trained.params, config.eval.threads);
  ex.report = evaluate(query, gallery, config.eval);
  return ex;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix read_param(const fs::path& path, const Matrix& like) {
  const Tensor t = read_tensor(path);
  if (t.dims.size() != 2 || t.dims[0] != like.rows() || t.dims[1] != like.cols()) {
    throw IoError(path.string() + ": shape does not match the model");
  }
  return to_matrix(t);
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  write_text(dir / "run.cfg", ckpt.config.to_text());
  std::ostringstream meta;
  meta << "in_channels = " << ckpt.model.in_channels << "\n"
       << "in_height = " << ckpt.model.in_height << "\n"
       << "in_width = " << ckpt.model.in_width << "\n"
       << "num_classes = " << ckpt.model.num_classes << "\n"
       << "classes =";
  for (std::size_t i = 0; i < ckpt.classes.size(); ++i) meta << (i ? "," : " ") << ckpt.classes[i];
  meta << "\n";
  write_text(dir / "model.txt", meta.str());

  const auto& ps = ckpt.params.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    write_tensor(dir / ("param." + ps[i].name + ".sptf"), to_tensor(ps[i].value));
    if (i < ckpt.adam.first_moment.size()) {
      write_tensor(dir / ("adam_m." + ps[i].name + ".sptf"), to_tensor(ckpt.adam.first_moment[i]));
      write_tensor(dir / ("adam_v." + ps[i].name + ".sptf"), to_tensor(ckpt.adam.second_moment[i]));
    }
  }
  write_tensor(dir / "adam_step.sptf", Tensor{{1}, {static_cast<float>(ckpt.adam.step)}});
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  Checkpoint ckpt;
  ckpt.config.apply_text(read_text(dir / "run.cfg"));
  ckpt.config.finalize();
  ckpt.model = ckpt.config.model;

  std::istringstream meta(read_text(dir / "model.txt"));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    std::istringstream value(line.substr(eq + 1));
    if (key == "in_channels") value >> ckpt.model.in_channels;
    else if (key == "in_height") value >> ckpt.model.in_height;
    else if (key == "in_width") value >> ckpt.model.in_width;
    else if (key == "num_classes") value >> ckpt.model.num_classes;
    else if (key == "classes") {
      std::string item;
      while (std::getline(value, item, ',')) ckpt.classes.push_back(std::stoi(item));
    }
  }
  ckpt.model.validate();

  ckpt.params = init_params(ckpt.model, 0);
  ckpt.adam = make_adam_state(ckpt.params, ckpt.config.adam);
  auto& ps = ckpt.params.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i].value = read_param(dir / ("param." + ps[i].name + ".sptf"), ps[i].value);
    ckpt.adam.first_moment[i] = read_param(dir / ("adam_m." + ps[i].name + ".sptf"), ps[i].value);
    ckpt.adam.second_moment[i] = read_param(dir / ("adam_v." + ps[i].name + ".sptf"), ps[i].value);
  }
  const Tensor step = read_tensor(dir / "adam_step.sptf");
  if (step.values.size() != 1) throw IoError("adam_step.sptf must hold one value");
  ckpt.adam.step = static_cast<std::size_t>(step.values[0]);
  return ckpt;
}

}  // namespace subpool
