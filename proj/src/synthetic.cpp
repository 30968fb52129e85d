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

#include "subpool/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "subpool/error.hpp"

namespace subpool {

void SyntheticSpec::validate() const {
  if (num_ids == 0 || images_per_id == 0 || cameras == 0 || channels == 0 || height == 0 || width == 0) {
    throw InvalidArgument("synthetic: all counts must be positive");
  }
  if (!(intra_noise >= 0.0) || !(camera_shift >= 0.0)) throw InvalidArgument("synthetic: negative noise level");
  if (!(spectrum_decay > 0.0 && spectrum_decay <= 1.0)) throw InvalidArgument("synthetic: decay must be in (0, 1]");
  if (latent_rank == 0) throw InvalidArgument("synthetic: latent rank must be positive");
}

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * n01(rng);
  return m;
}

// Random c x n map with singular values decaying by `decay` and entry RMS 1.
Matrix decaying_prototype(std::size_t c, std::size_t n, double decay, std::mt19937_64& rng) {
  const SvdFactors f = svd(gaussian(c, n, rng));
  const std::size_t r = f.S.size();
  std::vector<double> s(r);
  double energy = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    s[i] = std::pow(decay, static_cast<double>(i));
    energy += s[i] * s[i];
  }
  const double scale = std::sqrt(static_cast<double>(c * n) / energy);
  Matrix us = f.U;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < r; ++j) us(i, j) *= s[j] * scale;
  return matmul_nt(us, f.V);
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t c = spec.channels;
  const std::size_t n = spec.height * spec.width;

  // A camera adds one offset per channel at every location, as an
  // illumination or colour cast would.
  std::vector<Matrix> shifts;
  for (std::size_t cam = 0; cam < spec.cameras; ++cam) {
    const Matrix offset = gaussian(c, 1, rng, spec.camera_shift);
    shifts.push_back(matmul(offset, Matrix(1, n, 1.0)));
  }

  // Redundant structure: latent factor j carries energy decay^j.
  const std::size_t latent = std::min(spec.latent_rank, c);
  std::vector<double> latent_scale(latent);
  double latent_energy = 0.0;
  for (std::size_t j = 0; j < latent; ++j) {
    latent_scale[j] = std::pow(spec.spectrum_decay, static_cast<double>(j));
    latent_energy += latent_scale[j] * latent_scale[j];
  }

  Dataset data;
  for (std::size_t id = 0; id < spec.num_ids; ++id) {
    Matrix prototype;
    if (spec.structure == SyntheticStructure::prototype) {
      prototype = decaying_prototype(c, n, spec.spectrum_decay, rng);
    } else {
      // Mixing matrix with unit-RMS entries; Z rows scaled per latent factor
      // so that B * diag(scale) * Z has entry RMS 1 in expectation.
      prototype = gaussian(c, latent, rng, 1.0 / std::sqrt(latent_energy));
    }
    for (std::size_t j = 0; j < spec.images_per_id; ++j) {
      const std::size_t cam = j % spec.cameras;
      Matrix image;
      if (spec.structure == SyntheticStructure::prototype) {
        image = prototype;
      } else {
        Matrix z = gaussian(latent, n, rng);
        for (std::size_t a = 0; a < latent; ++a)
          for (std::size_t b = 0; b < n; ++b) z(a, b) *= latent_scale[a];
        image = matmul(prototype, z);
      }
      image += gaussian(c, n, rng, spec.intra_noise);
      image += shifts[cam];

      char name[64];
      std::snprintf(name, sizeof(name), "id%04zu_c%zu_%03zu.sptf", id, cam, j);
      data.entries.push_back({name, static_cast<int>(id), static_cast<int>(cam)});
      Tensor t;
      t.dims = {static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(spec.height),
                static_cast<std::uint32_t>(spec.width)};
      t.values.reserve(c * n);
      for (double v : image.data()) t.values.push_back(static_cast<float>(v));
      data.tensors.push_back(std::move(t));
    }
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < data.size(); ++i) write_tensor(dir / data.entries[i].path, data.tensors[i]);
  write_manifest(dir / "manifest.csv", data.entries);
}

Dataset load_dataset(const std::filesystem::path& manifest) {
  Dataset data;
  data.entries = load_manifest(manifest);
  const auto base = manifest.parent_path();
  data.tensors.reserve(data.entries.size());
  for (const auto& e : data.entries) {
    std::filesystem::path p(e.path);
    data.tensors.push_back(read_tensor(p.is_absolute() ? p : base / p));
  }
  return data;
}

}  // namespace subpool
