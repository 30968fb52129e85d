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

// Desk-scale re-identification network:
//
//   [conv 3x3 + ReLU] x S  ->  1x1 reduction to d channels  ->  pooling
//   ->  flatten  ->  linear classifier over T identities
//
// The conv stages only exist in image mode; in feature mode the input is
// already a c x h x w backbone feature map. Every stage has a hand-written
// backward pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "subpool/losses.hpp"
#include "subpool/numerics.hpp"
#include "subpool/retrieval_eval.hpp"
#include "subpool/subspace_pooling.hpp"

namespace subpool {

enum class InputMode { features, images };
enum class LossMode { id, tl, id_tl };
enum class PoolingMode {
  subspace,  // top-k left singular vectors
  average,   // per-channel mean over locations (baseline)
};

struct ModelConfig {
  InputMode input = InputMode::features;
  std::size_t in_channels = 32;
  std::size_t in_height = 4;
  std::size_t in_width = 8;
  std::vector<std::size_t> conv_widths;  // image mode only, e.g. {16, 32, 64}
  std::size_t conv_stride = 2;
  std::size_t reduced_channels = 16;  // d
  std::size_t rank = 4;               // k
  std::size_t num_classes = 10;       // T
  LossMode loss = LossMode::id_tl;
  double margin = 0.3;
  Reduction reduction = Reduction::mean;
  double triplet_weight = 1.0;  // lambda in L_id + lambda * L_tl
  PoolingMode pooling = PoolingMode::subspace;
  DescriptorMetric metric = DescriptorMetric::flattened_euclidean;

  struct Shape {
    std::size_t channels, height, width;
  };
  /// Shape of the map entering the 1x1 reduction.
  Shape backbone_output() const;
  std::size_t descriptor_size() const;
  void validate() const;
};

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  double lr_scale = 1.0;  // 0 freezes the parameter
};

/// Named parameters in a fixed order, each with a same-shape gradient buffer.
class ParamStore {
 public:
  Param& add(std::string name, Matrix value);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  bool all_finite() const;

 private:
  std::vector<Param> params_;
};

/// Conv kernels conv{i}.weight (out x in*9) and conv{i}.bias (out x 1),
/// reduce.weight (d x c), reduce.bias, classifier.weight (T x D),
/// classifier.bias. Weights are uniform in +-1/sqrt(fan_in), biases zero.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

/// Optional rescue for rank-deficient reduced maps: adds 1e-8 * N(0,1)
/// noise and retries. Each rescue is counted.
struct Jitter {
  std::mt19937_64 rng;
  std::size_t count = 0;
  static constexpr double kScale = 1e-8;
  static constexpr int kMaxAttempts = 4;
};

struct ConvCache {
  Matrix columns;     // (in*9) x (ho*wo)
  Matrix activation;  // out x (ho*wo), post-ReLU
  std::size_t in_channels, in_height, in_width;
  std::size_t out_height, out_width;
};

struct SampleCache {
  std::vector<ConvCache> conv;
  Matrix backbone;  // c x hw, input to the reduction
  Matrix reduced;   // d x hw, possibly jittered
  PoolCache pool;   // subspace mode only
};

struct ForwardResult {
  Matrix embeddings;  // N x D descriptors
  Matrix logits;      // N x T
  std::vector<SampleCache> caches;
};

/// Each input is C0 x (H0*W0). Throws InvalidArgument on shape mismatch and
/// RankError when pooling fails and no jitter is supplied.
ForwardResult forward(std::span<const Matrix> inputs, const ModelConfig& config, const ParamStore& params,
                      Jitter* jitter = nullptr);

/// Accumulates parameter gradients given dL/dlogits and dL/dembeddings.
void backward(const ForwardResult& fwd, const Matrix& grad_logits, const Matrix& grad_embeddings,
              const ModelConfig& config, ParamStore& params);

struct LossValue {
  double id = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  Matrix grad_logits;
  Matrix grad_embeddings;
};

/// Combined objective L_id + lambda * L_tl per the loss mode. The triplet
/// term uses the configured descriptor metric.
LossValue compute_loss(const ForwardResult& fwd, std::span<const int> labels, const ModelConfig& config);

/// N x N projection distances sqrt(max(0, k - |U_i^T U_j|^2) + 1e-16) between
/// flattened c x k bases, and the chain rule back to the embeddings.
Matrix projection_distances(const Matrix& embeddings, std::size_t k);
Matrix projection_distances_backward(const Matrix& embeddings, std::size_t k, const Matrix& distances,
                                     const Matrix& grad_distances);

/// Descriptors for evaluation, one per input. Rank-deficient maps are
/// rescued with a jitter seeded from the input index, so results do not
/// depend on `threads`.
std::vector<std::vector<double>> describe(std::span<const Matrix> inputs, const ModelConfig& config,
                                          const ParamStore& params, std::size_t threads = 1);

}  // namespace subpool
