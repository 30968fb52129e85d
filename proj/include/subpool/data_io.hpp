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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "subpool/numerics.hpp"

namespace subpool {

/// Row-major float32 tensor as stored on disk.
///
/// File layout (all multi-byte fields little-endian):
///
///   offset  size     field
///   0       4        magic "SPTF"
///   4       1        version = 1
///   5       1        dtype = 1 (float32)
///   6       2        rank (uint16)
///   8       4*rank   dims (uint32 each)
///   ...     4*prod   payload, row-major float32
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::vector<unsigned char> encode_tensor(const Tensor& t);
/// Throws IoError naming the offending field (magic, version, dtype, length).
Tensor decode_tensor(std::span<const unsigned char> bytes);

/// Writes through a temporary sibling file and renames it into place.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Double-precision matrix <-> rank-2 tensor.
Tensor to_tensor(const Matrix& m);
Matrix to_matrix(const Tensor& t);

/// One row of a `path,person_id,camera_id` manifest. person_id -1 marks junk.
struct ManifestEntry {
  std::string path;
  int person_id = 0;
  int camera_id = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline constexpr const char* kManifestHeader = "path,person_id,camera_id";

/// Entries in file order. Errors cite the 1-based line number.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
std::vector<ManifestEntry> parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

struct SplitSpec {
  double train_fraction = 0.5;  // identity-level
  std::uint64_t seed = 7;
  std::size_t queries_per_group = 1;
};

/// Identity-disjoint train/test partition; the test side is further split
/// into query and gallery images. All vectors hold indices into the
/// manifest except the id lists.
struct DatasetSplit {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  std::vector<std::size_t> train;
  std::vector<std::size_t> query;
  std::vector<std::size_t> gallery;
};

/// Identities (junk excluded) are shuffled with `seed` and the first
/// round(fraction * n) go to training. In the test half, each (id, camera)
/// group with at least two images contributes min(q, size - 1) randomly
/// chosen queries; everything else, junk included, is gallery.
DatasetSplit split_dataset(std::span<const ManifestEntry> entries, const SplitSpec& spec);

}  // namespace subpool
