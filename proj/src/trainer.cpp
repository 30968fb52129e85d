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

#include "subpool/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include "subpool/error.hpp"

namespace subpool {

std::uint64_t init_seed(std::uint64_t seed) { return seed; }

namespace {

std::uint64_t sampler_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

}  // namespace

TrainResult train(const TrainingSet& data, ModelConfig model, const AdamConfig& adam, const TrainConfig& config,
                  const Evaluator& evaluator) {
  if (data.inputs.size() != data.person_ids.size()) {
    throw InvalidArgument("train: inputs and person ids differ in length");
  }
  if (config.batch_ids < 2 || config.batch_instances < 2) {
    throw InvalidArgument("train: P and K must both be >= 2");
  }

  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < data.person_ids.size(); ++i) {
    if (data.person_ids[i] >= 0) by_id[data.person_ids[i]].push_back(i);
  }
  TrainResult result;
  std::map<int, int> class_of;
  for (const auto& [id, members] : by_id) {
    class_of[id] = static_cast<int>(result.classes.size());
    result.classes.push_back(id);
  }
  std::vector<int> eligible;
  for (const auto& [id, members] : by_id)
    if (members.size() >= config.batch_instances) eligible.push_back(id);
  if (eligible.size() < config.batch_ids) {
    throw InvalidArgument("train: " + std::to_string(eligible.size()) + " identities have at least K = " +
                          std::to_string(config.batch_instances) + " images, P = " +
                          std::to_string(config.batch_ids) + " needed");
  }

  model.num_classes = result.classes.size();
  model.validate();
  result.model = model;
  result.params = init_params(model, init_seed(config.seed));
  if (config.freeze_conv) {
    for (auto& p : result.params.params())
      if (p.name.rfind("conv", 0) == 0) p.lr_scale = 0.0;
  }
  result.adam = make_adam_state(result.params, adam);

  const std::size_t steps =
      config.steps_per_epoch ? config.steps_per_epoch : std::max<std::size_t>(1, eligible.size() / config.batch_ids);
  std::mt19937_64 rng(sampler_seed(config.seed));
  Jitter jitter{std::mt19937_64(sampler_seed(config.seed) + 1), 0};
  std::vector<int> id_order = eligible;
  std::size_t cursor = id_order.size();  // forces a shuffle on the first draw

  std::vector<Matrix> batch_inputs;
  std::vector<int> batch_labels;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    entry.learning_rate = result.adam.config.rate_at(epoch);
    for (std::size_t step = 0; step < steps; ++step) {
      batch_inputs.clear();
      batch_labels.clear();
      // P distinct identities, continuing through a shuffled order that is
      // reshuffled whenever it runs out.
      std::vector<int> chosen;
      while (chosen.size() < config.batch_ids) {
        if (cursor >= id_order.size()) {
          std::shuffle(id_order.begin(), id_order.end(), rng);
          cursor = 0;
        }
        const int id = id_order[cursor++];
        if (std::find(chosen.begin(), chosen.end(), id) == chosen.end()) chosen.push_back(id);
      }
      for (int id : chosen) {
        auto members = by_id[id];
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t k = 0; k < config.batch_instances; ++k) {
          batch_inputs.push_back(data.inputs[members[k]]);
          batch_labels.push_back(class_of[id]);
        }
      }

      const ForwardResult fwd = forward(batch_inputs, model, result.params, &jitter);
      const LossValue loss = compute_loss(fwd, batch_labels, model);
      if (!std::isfinite(loss.total)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1));
      }
      result.params.zero_grad();
      backward(fwd, loss.grad_logits, loss.grad_embeddings, model, result.params);
      adam_step(result.params, result.adam, epoch);

      entry.loss_id += loss.id;
      entry.loss_tl += loss.triplet;
      entry.loss_total += loss.total;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    entry.loss_id *= inv;
    entry.loss_tl *= inv;
    entry.loss_total *= inv;
    result.log.push_back(entry);

    if (evaluator && config.eval_every > 0 && epoch % config.eval_every == 0) {
      result.snapshots.emplace_back(epoch, evaluator(model, result.params));
    }
  }
  result.jitter_count = jitter.count;
  return result;
}

}  // namespace subpool
