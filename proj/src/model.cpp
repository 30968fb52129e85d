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

#include "subpool/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "subpool/error.hpp"

namespace subpool {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kPad = 1;

std::size_t conv_out(std::size_t in, std::size_t stride) { return (in + 2 * kPad - kKernel) / stride + 1; }

}  // namespace

ModelConfig::Shape ModelConfig::backbone_output() const {
  Shape s{in_channels, in_height, in_width};
  if (input == InputMode::images) {
    for (std::size_t width : conv_widths) {
      s = {width, conv_out(s.height, conv_stride), conv_out(s.width, conv_stride)};
    }
  }
  return s;
}

std::size_t ModelConfig::descriptor_size() const {
  return pooling == PoolingMode::subspace ? reduced_channels * rank : reduced_channels;
}

void ModelConfig::validate() const {
  if (in_channels == 0 || in_height == 0 || in_width == 0) throw InvalidArgument("model: input dims must be positive");
  if (input == InputMode::images) {
    if (conv_widths.empty()) throw InvalidArgument("model: image mode needs at least one conv stage");
    if (conv_stride == 0) throw InvalidArgument("model: conv stride must be positive");
    for (auto w : conv_widths)
      if (w == 0) throw InvalidArgument("model: conv widths must be positive");
  }
  const Shape s = backbone_output();
  if (reduced_channels == 0 || reduced_channels > s.channels) {
    throw InvalidArgument("model: reduced channels " + std::to_string(reduced_channels) + " must lie in [1, " +
                          std::to_string(s.channels) + "]");
  }
  if (pooling == PoolingMode::subspace &&
      (rank == 0 || rank > std::min(reduced_channels, s.height * s.width))) {
    throw InvalidArgument("model: rank " + std::to_string(rank) + " must lie in [1, min(" +
                          std::to_string(reduced_channels) + ", " + std::to_string(s.height * s.width) + ")]");
  }
  if (num_classes < 2) throw InvalidArgument("model: need at least 2 identity classes");
  if (!(margin >= 0.0)) throw InvalidArgument("model: margin must be >= 0");
  if (!(triplet_weight >= 0.0)) throw InvalidArgument("model: triplet weight must be >= 0");
  if (metric == DescriptorMetric::projection && pooling != PoolingMode::subspace) {
    throw InvalidArgument("model: the projection metric needs subspace pooling");
  }
}

Param& ParamStore::add(std::string name, Matrix value) {
  if (contains(name)) throw InvalidArgument("ParamStore: duplicate parameter " + name);
  Param p;
  p.name = std::move(name);
  p.grad = Matrix(value.rows(), value.cols());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw InvalidArgument("ParamStore: no parameter " + name);
}

const Param& ParamStore::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw InvalidArgument("ParamStore: no parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Param& p) { return p.name == name; });
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);
}

bool ParamStore::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const Param& p) { return subpool::all_finite(p.value) && subpool::all_finite(p.grad); });
}

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t rows, std::size_t cols, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
  };

  ParamStore store;
  std::size_t channels = config.in_channels;
  if (config.input == InputMode::images) {
    for (std::size_t i = 0; i < config.conv_widths.size(); ++i) {
      const std::size_t out = config.conv_widths[i];
      const std::size_t fan_in = channels * kKernel * kKernel;
      store.add("conv" + std::to_string(i) + ".weight", uniform(out, fan_in, fan_in));
      store.add("conv" + std::to_string(i) + ".bias", Matrix(out, 1));
      channels = out;
    }
  }
  store.add("reduce.weight", uniform(config.reduced_channels, channels, channels));
  store.add("reduce.bias", Matrix(config.reduced_channels, 1));
  const std::size_t dsize = config.descriptor_size();
  store.add("classifier.weight", uniform(config.num_classes, dsize, dsize));
  store.add("classifier.bias", Matrix(config.num_classes, 1));
  return store;
}

namespace {

Matrix im2col(const Matrix& x, std::size_t h, std::size_t w, std::size_t stride, std::size_t ho, std::size_t wo) {
  const std::size_t cin = x.rows();
  Matrix cols(cin * kKernel * kKernel, ho * wo);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        auto row = cols.row((c * kKernel + ky) * kKernel + kx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(kPad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(kPad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            row[oy * wo + ox] = x(c, static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix));
          }
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t stride, std::size_t ho,
              std::size_t wo) {
  Matrix x(cin, h * w);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        auto row = cols.row((c * kKernel + ky) * kKernel + kx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(kPad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(kPad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            x(c, static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) += row[oy * wo + ox];
          }
        }
      }
    }
  }
  return x;
}

void add_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double b = bias(i, 0);
    for (double& v : m.row(i)) v += b;
  }
}

void accumulate_row_sums(Matrix& bias_grad, const Matrix& g) {
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double s = 0.0;
    for (double v : g.row(i)) s += v;
    bias_grad(i, 0) += s;
  }
}

PoolResult pool_with_jitter(Matrix& reduced, std::size_t k, Jitter* jitter) {
  for (int attempt = 0;; ++attempt) {
    try {
      return pool_forward(reduced, k);
    } catch (const RankError&) {
      if (jitter == nullptr || attempt >= Jitter::kMaxAttempts) throw;
      std::normal_distribution<double> n01(0.0, 1.0);
      for (double& v : reduced.data()) v += Jitter::kScale * n01(jitter->rng);
      ++jitter->count;
    }
  }
}

}  // namespace

ForwardResult forward(std::span<const Matrix> inputs, const ModelConfig& config, const ParamStore& params,
                      Jitter* jitter) {
  const std::size_t n = inputs.size();
  const std::size_t dsize = config.descriptor_size();
  ForwardResult out;
  out.embeddings = Matrix(n, dsize);
  out.caches.resize(n);

  const Matrix& wr = params.at("reduce.weight").value;
  const Matrix& br = params.at("reduce.bias").value;

  for (std::size_t s = 0; s < n; ++s) {
    const Matrix& x = inputs[s];
    if (x.rows() != config.in_channels || x.cols() != config.in_height * config.in_width) {
      throw InvalidArgument("forward: input " + std::to_string(s) + " is " + std::to_string(x.rows()) + "x" +
                            std::to_string(x.cols()) + ", expected " + std::to_string(config.in_channels) + "x" +
                            std::to_string(config.in_height * config.in_width));
    }
    SampleCache& cache = out.caches[s];
    Matrix act = x;
    std::size_t h = config.in_height, w = config.in_width;
    if (config.input == InputMode::images) {
      for (std::size_t i = 0; i < config.conv_widths.size(); ++i) {
        const Matrix& k = params.at("conv" + std::to_string(i) + ".weight").value;
        const Matrix& b = params.at("conv" + std::to_string(i) + ".bias").value;
        ConvCache cc;
        cc.in_channels = act.rows();
        cc.in_height = h;
        cc.in_width = w;
        cc.out_height = conv_out(h, config.conv_stride);
        cc.out_width = conv_out(w, config.conv_stride);
        cc.columns = im2col(act, h, w, config.conv_stride, cc.out_height, cc.out_width);
        Matrix z = matmul(k, cc.columns);
        add_bias(z, b);
        for (double& v : z.data()) v = std::max(v, 0.0);
        cc.activation = z;
        act = std::move(z);
        h = cc.out_height;
        w = cc.out_width;
        cache.conv.push_back(std::move(cc));
      }
    }
    cache.backbone = std::move(act);
    cache.reduced = matmul(wr, cache.backbone);
    add_bias(cache.reduced, br);

    auto emb = out.embeddings.row(s);
    if (config.pooling == PoolingMode::subspace) {
      PoolResult pooled = pool_with_jitter(cache.reduced, config.rank, jitter);
      const auto flat = flatten(pooled.descriptor);
      std::copy(flat.begin(), flat.end(), emb.begin());
      cache.pool = std::move(pooled.cache);
    } else {
      const double inv = 1.0 / static_cast<double>(cache.reduced.cols());
      for (std::size_t i = 0; i < cache.reduced.rows(); ++i) {
        double sum = 0.0;
        for (double v : cache.reduced.row(i)) sum += v;
        emb[i] = sum * inv;
      }
    }
  }

  out.logits = matmul_nt(out.embeddings, params.at("classifier.weight").value);
  const Matrix& bc = params.at("classifier.bias").value;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < config.num_classes; ++t) out.logits(s, t) += bc(t, 0);
  return out;
}

void backward(const ForwardResult& fwd, const Matrix& grad_logits, const Matrix& grad_embeddings,
              const ModelConfig& config, ParamStore& params) {
  const std::size_t n = fwd.caches.size();
  const std::size_t dsize = config.descriptor_size();
  if (grad_logits.rows() != n || grad_logits.cols() != config.num_classes) {
    throw InvalidArgument("backward: logit gradient has the wrong shape");
  }
  if (grad_embeddings.rows() != n || grad_embeddings.cols() != dsize) {
    throw InvalidArgument("backward: embedding gradient has the wrong shape");
  }

  Param& wc = params.at("classifier.weight");
  Param& bc = params.at("classifier.bias");
  // dW_c = dlogits^T * embeddings; dE = dlogits * W_c + upstream.
  wc.grad += matmul_tn(grad_logits, fwd.embeddings);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < config.num_classes; ++t) bc.grad(t, 0) += grad_logits(s, t);
  const Matrix grad_emb = matmul(grad_logits, wc.value) + grad_embeddings;

  Param& wr = params.at("reduce.weight");
  Param& br = params.at("reduce.bias");
  for (std::size_t s = 0; s < n; ++s) {
    const SampleCache& cache = fwd.caches[s];
    const auto g = grad_emb.row(s);
    Matrix grad_reduced;
    if (config.pooling == PoolingMode::subspace) {
      grad_reduced = pool_backward(cache.pool, unflatten(g, config.reduced_channels));
    } else {
      const std::size_t locations = cache.reduced.cols();
      grad_reduced = Matrix(config.reduced_channels, locations);
      const double inv = 1.0 / static_cast<double>(locations);
      for (std::size_t i = 0; i < config.reduced_channels; ++i)
        for (double& v : grad_reduced.row(i)) v = g[i] * inv;
    }
    wr.grad += matmul_nt(grad_reduced, cache.backbone);
    accumulate_row_sums(br.grad, grad_reduced);

    if (config.input != InputMode::images) continue;
    Matrix grad_act = matmul_tn(wr.value, grad_reduced);
    for (std::size_t i = cache.conv.size(); i-- > 0;) {
      const ConvCache& cc = cache.conv[i];
      Param& k = params.at("conv" + std::to_string(i) + ".weight");
      Param& b = params.at("conv" + std::to_string(i) + ".bias");
      // ReLU mask: the activation is zero exactly where the unit was clipped.
      for (std::size_t j = 0; j < grad_act.size(); ++j)
        if (cc.activation.data()[j] <= 0.0) grad_act.data()[j] = 0.0;
      k.grad += matmul_nt(grad_act, cc.columns);
      accumulate_row_sums(b.grad, grad_act);
      if (i == 0) break;
      grad_act = col2im(matmul_tn(k.value, grad_act), cc.in_channels, cc.in_height, cc.in_width, config.conv_stride,
                        cc.out_height, cc.out_width);
    }
  }
}

Matrix projection_distances(const Matrix& embeddings, std::size_t k) {
  const std::size_t n = embeddings.rows();
  const std::size_t c = embeddings.cols() / k;
  std::vector<Matrix> bases;
  bases.reserve(n);
  for (std::size_t i = 0; i < n; ++i) bases.push_back(unflatten(embeddings.row(i), c));
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Matrix g = matmul_tn(bases[i], bases[j]);
      double gg = 0.0;
      for (double v : g.data()) gg += v * v;
      d(i, j) = std::sqrt(std::max(0.0, static_cast<double>(k) - gg) + kDistanceStabilizer);
    }
  }
  return d;
}

Matrix projection_distances_backward(const Matrix& embeddings, std::size_t k, const Matrix& distances,
                                     const Matrix& grad_distances) {
  const std::size_t n = embeddings.rows();
  const std::size_t c = embeddings.cols() / k;
  std::vector<Matrix> bases;
  for (std::size_t i = 0; i < n; ++i) bases.push_back(unflatten(embeddings.row(i), c));
  std::vector<Matrix> grads(n, Matrix(c, k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double gd = grad_distances(i, j);
      if (gd == 0.0) continue;
      const Matrix g = matmul_tn(bases[i], bases[j]);  // U_i^T U_j
      double gg = 0.0;
      for (double v : g.data()) gg += v * v;
      if (static_cast<double>(k) - gg <= 0.0) continue;  // clamped branch has zero slope
      // D = sqrt(k - |U_i^T U_j|^2 + eps): dD/dU_i = -U_j G^T / D, dD/dU_j = -U_i G / D.
      const double s = -gd / distances(i, j);
      grads[i] += s * matmul_nt(bases[j], g);
      grads[j] += s * matmul(bases[i], g);
    }
  }
  Matrix out(n, embeddings.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto flat = flatten(grads[i]);
    std::copy(flat.begin(), flat.end(), out.row(i).begin());
  }
  return out;
}

LossValue compute_loss(const ForwardResult& fwd, std::span<const int> labels, const ModelConfig& config) {
  const std::size_t n = fwd.embeddings.rows();
  LossValue out;
  out.grad_logits = Matrix(n, config.num_classes);
  out.grad_embeddings = Matrix(n, fwd.embeddings.cols());

  if (config.loss != LossMode::tl) {
    LossResult ce = cross_entropy(fwd.logits, labels);
    out.id = ce.loss;
    out.grad_logits = std::move(ce.grad);
  }
  if (config.loss != LossMode::id) {
    const double lambda = config.loss == LossMode::tl ? 1.0 : config.triplet_weight;
    if (config.metric == DescriptorMetric::flattened_euclidean) {
      const auto batch =
          TripletBatch::make(fwd.embeddings, std::vector<int>(labels.begin(), labels.end()), config.margin);
      LossResult tl = batch_hard_triplet(batch, config.reduction);
      out.triplet = tl.loss;
      out.grad_embeddings = lambda * std::move(tl.grad);
    } else {
      // Validates the P x K layout before mining.
      (void)TripletBatch::make(Matrix(n, 1), std::vector<int>(labels.begin(), labels.end()), config.margin);
      const Matrix d = projection_distances(fwd.embeddings, config.rank);
      TripletMining mined = batch_hard_mine(d, labels, config.margin, config.reduction);
      out.triplet = mined.loss;
      out.grad_embeddings =
          lambda * projection_distances_backward(fwd.embeddings, config.rank, d, mined.grad_distances);
    }
    out.total = out.id + lambda * out.triplet;
  } else {
    out.total = out.id;
  }
  return out;
}

std::vector<std::vector<double>> describe(std::span<const Matrix> inputs, const ModelConfig& config,
                                          const ParamStore& params, std::size_t threads) {
  std::vector<std::vector<double>> out(inputs.size());
  auto work = [&](std::size_t i) {
    Jitter jitter{std::mt19937_64(0x5eedULL + i), 0};
    const ForwardResult f = forward(inputs.subspan(i, 1), config, params, &jitter);
    const auto row = f.embeddings.row(0);
    out[i].assign(row.begin(), row.end());
  };
  threads = std::max<std::size_t>(1, std::min(threads, inputs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) work(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < inputs.size(); i += threads) work(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace subpool
