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

#include "subpool/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "subpool/error.hpp"
#include "subpool/losses.hpp"
#include "subpool/model.hpp"
#include "subpool/numerics.hpp"
#include "subpool/subspace_pooling.hpp"

namespace subpool {

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = n(rng);
  return m;
}

// Random rows x cols matrix with the given singular values.
Matrix with_spectrum(std::size_t rows, std::size_t cols, const std::vector<double>& sigma, std::mt19937_64& rng) {
  const std::size_t r = sigma.size();
  const Matrix left = svd(gaussian(rows, r, rng)).U;
  const Matrix right = svd(gaussian(cols, r, rng)).U;
  return matmul_nt(matmul(left, Matrix::diagonal(sigma)), right);
}

// Central differences of `loss` over every entry of `x`.
std::vector<double> numeric_gradient(Matrix& x, double h, const std::function<double()>& loss) {
  std::vector<double> g(x.size());
  auto v = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + h;
    const double up = loss();
    v[i] = saved - h;
    const double down = loss();
    v[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<double> as_vector(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

GradcheckStage make_stage(std::string name, double tolerance) {
  GradcheckStage s;
  s.name = std::move(name);
  s.tolerance = tolerance;
  return s;
}

void record(GradcheckStage& s, const std::vector<double>& analytic, const std::vector<double>& numeric) {
  s.max_rel_error = std::max(s.max_rel_error, relative_error(analytic, numeric));
  s.evaluations += numeric.size();
}

void finish(GradcheckStage& s) { s.passed = std::isfinite(s.max_rel_error) && s.max_rel_error <= s.tolerance; }

// L = <W, U_k> for a fixed random W.
void check_pooling_case(GradcheckStage& s, Matrix a, std::size_t k, std::mt19937_64& rng) {
  const Matrix w = gaussian(a.rows(), k, rng);
  const PoolResult base = pool_forward(a, k);
  const Matrix analytic = pool_backward(base.cache, w);
  const auto loss = [&] { return dot(pool_forward(a, k).descriptor.basis.data(), w.data()); };
  record(s, as_vector(analytic), numeric_gradient(a, 1e-5, loss));
}

GradcheckStage stage_pooling(std::mt19937_64& rng) {
  GradcheckStage s = make_stage("pooling", 1e-5);
  check_pooling_case(s, with_spectrum(5, 8, {5.0, 3.0, 2.0, 1.0, 0.5}, rng), 2, rng);
  check_pooling_case(s, with_spectrum(8, 5, {4.0, 2.5, 1.5, 1.0, 0.5}, rng), 2, rng);
  check_pooling_case(s, with_spectrum(6, 6, {3.0, 2.0, 1.2, 0.7, 0.4, 0.2}, rng), 3, rng);
  finish(s);
  return s;
}

// Two retained singular values 1e-7 apart. Individual singular vectors are
// not differentiable there, so the loss tr(U_k^T M U_k) only sees the span.
GradcheckStage stage_pooling_degenerate(std::mt19937_64& rng) {
  GradcheckStage s = make_stage("pooling-degenerate", 1e-3);
  Matrix a = with_spectrum(6, 6, {4.0, 2.0 + 1e-7, 2.0, 1.0, 0.5, 0.25}, rng);
  const std::size_t k = 3;
  Matrix m = gaussian(6, 6, rng);
  m += m.transposed();
  const PoolResult base = pool_forward(a, k);
  const Matrix& u = base.descriptor.basis;
  const Matrix grad_u = 2.0 * matmul(m, u);
  const Matrix analytic = pool_backward(base.cache, grad_u);
  const auto loss = [&] {
    const Matrix uk = pool_forward(a, k).descriptor.basis;
    return dot(uk.data(), matmul(m, uk).data());
  };
  record(s, as_vector(analytic), numeric_gradient(a, 1e-5, loss));
  finish(s);
  return s;
}

GradcheckStage stage_crossentropy(std::mt19937_64& rng) {
  GradcheckStage s = make_stage("crossentropy", 1e-6);
  Matrix logits = gaussian(5, 7, rng);
  std::uniform_int_distribution<int> label(0, 6);
  std::vector<int> labels(5);
  for (auto& l : labels) l = label(rng);
  const Matrix analytic = cross_entropy(logits, labels).grad;
  record(s, as_vector(analytic), numeric_gradient(logits, 1e-5, [&] { return cross_entropy(logits, labels).loss; }));
  finish(s);
  return s;
}

GradcheckStage stage_triplet(std::mt19937_64& rng) {
  GradcheckStage s = make_stage("triplet", 1e-5);
  const std::size_t p = 3, k = 4;
  std::vector<int> labels;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) labels.push_back(static_cast<int>(i));
  for (Reduction reduction : {Reduction::mean, Reduction::sum}) {
    Matrix emb = gaussian(p * k, 6, rng);
    // A margin larger than the spread keeps every anchor active.
    const double margin = 2.0;
    const Matrix analytic = batch_hard_triplet(TripletBatch::make(emb, labels, margin), reduction).grad;
    const auto loss = [&] { return batch_hard_triplet(TripletBatch::make(emb, labels, margin), reduction).loss; };
    record(s, as_vector(analytic), numeric_gradient(emb, 1e-6, loss));
  }
  finish(s);
  return s;
}

ModelConfig toy_model(PoolingMode pooling, DescriptorMetric metric) {
  ModelConfig c;
  c.input = InputMode::images;
  c.in_channels = 3;
  c.in_height = 16;
  c.in_width = 16;
  c.conv_widths = {4, 6, 8};
  c.reduced_channels = 4;
  c.rank = 2;
  c.num_classes = 2;
  c.loss = LossMode::id_tl;
  c.margin = 0.3;
  c.pooling = pooling;
  c.metric = metric;
  return c;
}

// Every parameter of the image-mode network under the combined objective on
// a 2 x 2 batch.
GradcheckStage stage_pipeline(const std::string& name, const ModelConfig& config, std::mt19937_64& rng) {
  GradcheckStage s = make_stage(name, 1e-4);
  config.validate();
  ParamStore params = init_params(config, rng());
  std::vector<Matrix> inputs;
  for (int i = 0; i < 4; ++i) inputs.push_back(gaussian(config.in_channels, config.in_height * config.in_width, rng));
  const std::vector<int> labels = {0, 0, 1, 1};

  const auto loss = [&] { return compute_loss(forward(inputs, config, params), labels, config).total; };
  const ForwardResult fwd = forward(inputs, config, params);
  const LossValue value = compute_loss(fwd, labels, config);
  params.zero_grad();
  backward(fwd, value.grad_logits, value.grad_embeddings, config, params);
  for (auto& p : params.params()) {
    const std::vector<double> analytic = as_vector(p.grad);
    record(s, analytic, numeric_gradient(p.value, 1e-6, loss));
  }
  finish(s);
  return s;
}

}  // namespace

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw InvalidArgument("relative_error: length mismatch");
  double diff = 0.0, scale = 1e-300;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!std::isfinite(analytic[i]) || !std::isfinite(numeric[i])) return INFINITY;
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

const std::vector<std::string>& gradcheck_stage_names() {
  static const std::vector<std::string> names = {"pooling",          "crossentropy",     "triplet",
                                                 "pipeline",         "pipeline-projection", "pipeline-average",
                                                 "pooling-degenerate"};
  return names;
}

std::vector<GradcheckStage> run_gradcheck(const GradcheckOptions& options) {
  const auto& names = gradcheck_stage_names();
  if (!options.stage.empty() && std::find(names.begin(), names.end(), options.stage) == names.end()) {
    throw InvalidArgument("unknown gradcheck stage '" + options.stage + "'");
  }
  std::vector<GradcheckStage> out;
  for (std::size_t index = 0; index < names.size(); ++index) {
    const std::string& name = names[index];
    if (options.stage.empty()) {
      if (name == "pooling-degenerate" && !options.degenerate) continue;
    } else if (name != options.stage) {
      continue;
    }
    // Each stage draws from its own generator so stages can run alone.
    std::mt19937_64 rng(options.seed * 1000003ULL + index);
    if (name == "pooling") {
      out.push_back(stage_pooling(rng));
    } else if (name == "pooling-degenerate") {
      out.push_back(stage_pooling_degenerate(rng));
    } else if (name == "crossentropy") {
      out.push_back(stage_crossentropy(rng));
    } else if (name == "triplet") {
      out.push_back(stage_triplet(rng));
    } else if (name == "pipeline") {
      out.push_back(stage_pipeline(name, toy_model(PoolingMode::subspace, DescriptorMetric::flattened_euclidean), rng));
    } else if (name == "pipeline-projection") {
      out.push_back(stage_pipeline(name, toy_model(PoolingMode::subspace, DescriptorMetric::projection), rng));
    } else {
      out.push_back(stage_pipeline(name, toy_model(PoolingMode::average, DescriptorMetric::flattened_euclidean), rng));
    }
  }
  return out;
}

}  // namespace subpool
