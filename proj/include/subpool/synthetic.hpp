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

// Identity-clustered synthetic feature maps for desk-scale experiments.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "subpool/data_io.hpp"

namespace subpool {

enum class SyntheticStructure {
  /// image = prototype(id) + noise + shift(camera). Prototypes have a
  /// geometrically decaying singular spectrum, like real CNN activations.
  prototype,
  /// image = B(id) * Z + noise + shift(camera) with Z drawn fresh per image:
  /// channels are redundant mixtures of a few latent factors and identity
  /// lives in which mixtures co-occur, not in the per-channel means.
  redundant,
};

struct SyntheticSpec {
  std::size_t num_ids = 20;
  std::size_t images_per_id = 8;
  std::size_t cameras = 2;
  std::size_t channels = 32;
  std::size_t height = 4;
  std::size_t width = 8;
  double intra_noise = 0.3;   // std of per-image noise, relative to prototype RMS 1
  double camera_shift = 0.3;  // std of the per-camera additive field
  std::uint64_t seed = 7;
  SyntheticStructure structure = SyntheticStructure::prototype;
  double spectrum_decay = 0.7;   // ratio of consecutive prototype singular values
  std::size_t latent_rank = 4;   // latent factors for the redundant structure

  void validate() const;
};

/// Tensors held in memory alongside their manifest rows.
struct Dataset {
  std::vector<ManifestEntry> entries;
  std::vector<Tensor> tensors;

  std::size_t size() const { return entries.size(); }
};

/// Deterministic for a given spec. Image j of an identity is shot by camera
/// j mod cameras. Tensors are (channels, height, width).
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Writes one tensor file per image plus `manifest.csv` into `dir`.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Reads a manifest and every tensor it names (paths relative to the
/// manifest's directory unless absolute).
Dataset load_dataset(const std::filesystem::path& manifest);

}  // namespace subpool
