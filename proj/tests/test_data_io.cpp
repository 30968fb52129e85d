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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>

#include <unistd.h>

#include "doctest.h"
#include "subpool/data_io.hpp"
#include "subpool/error.hpp"
#include "subpool/synthetic.hpp"

using namespace subpool;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("subpool_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Tensor random_tensor(std::vector<std::uint32_t> dims, std::mt19937_64& rng) {
  Tensor t{std::move(dims), {}};
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (std::size_t i = 0; i < t.element_count(); ++i) t.values.push_back(n(rng));
  return t;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("tensor layout is little-endian SPTF") {
  const Tensor t{{2, 1}, {1.0f, -2.0f}};
  const auto bytes = encode_tensor(t);
  REQUIRE(bytes.size() == 8 + 8 + 8);
  CHECK(std::memcmp(bytes.data(), "SPTF", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 2);
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 1);
  // 1.0f = 0x3f800000
  CHECK(bytes[16] == 0x00);
  CHECK(bytes[19] == 0x3f);
}

TEST_CASE("tensor round trip is bitwise for ranks 1 to 4, in memory and on disk") {
  std::mt19937_64 rng(41);
  const fs::path dir = scratch_dir("tensor");
  for (std::size_t rank = 1; rank <= 4; ++rank) {
    std::vector<std::uint32_t> dims;
    for (std::size_t i = 0; i < rank; ++i) dims.push_back(1 + static_cast<std::uint32_t>(rng() % 5));
    const Tensor t = random_tensor(dims, rng);
    const auto bytes = encode_tensor(t);
    CHECK(decode_tensor(bytes) == t);
    CHECK(encode_tensor(decode_tensor(bytes)) == bytes);
    const fs::path p = dir / ("t" + std::to_string(rank) + ".sptf");
    write_tensor(p, t);
    const Tensor back = read_tensor(p);
    CHECK(std::memcmp(back.values.data(), t.values.data(), 4 * t.values.size()) == 0);
    CHECK(back.dims == t.dims);
  }
  CHECK_FALSE(fs::exists(dir / "t1.sptf.tmp"));
  fs::remove_all(dir);
}

TEST_CASE("corrupt tensors name the offending field") {
  const Tensor t{{3}, {1.0f, 2.0f, 3.0f}};
  auto bytes = encode_tensor(t);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(error_of([&] { decode_tensor(bad); }).find("magic") != std::string::npos);
  bad = bytes;
  bad[4] = 2;
  CHECK(error_of([&] { decode_tensor(bad); }).find("version") != std::string::npos);
  bad = bytes;
  bad[5] = 7;
  CHECK(error_of([&] { decode_tensor(bad); }).find("dtype") != std::string::npos);
  bad = bytes;
  bad.pop_back();
  CHECK(error_of([&] { decode_tensor(bad); }) == "tensor: expected 24 bytes, got 23");
  CHECK_THROWS_AS(decode_tensor(std::span<const unsigned char>(bytes.data(), 5)), IoError);
  CHECK_THROWS_AS(read_tensor("/nonexistent/x.sptf"), IoError);
}

TEST_CASE("matrix conversion keeps the first axis as rows") {
  const Tensor t{{2, 2, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  const Matrix m = to_matrix(t);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 6);
  CHECK(m(1, 0) == 6.0);
  CHECK(to_tensor(m).dims == std::vector<std::uint32_t>{2, 6});
}

TEST_CASE("manifest parsing and its errors") {
  const auto entries = parse_manifest("path,person_id,camera_id\na.sptf,3,0\nb.sptf,-1,1\n");
  REQUIRE(entries.size() == 2);
  CHECK(entries[1] == ManifestEntry{"b.sptf", -1, 1});
  CHECK(error_of([] { parse_manifest("path,id,cam\n"); }).find("line 1") != std::string::npos);
  CHECK(error_of([] { parse_manifest("path,person_id,camera_id\na,1,0\nb,x,0\n"); }).find("line 3") !=
        std::string::npos);
  CHECK(error_of([] { parse_manifest("path,person_id,camera_id\na,1,0\na,2,0\n"); }).find("duplicate") !=
        std::string::npos);
  CHECK(error_of([] { parse_manifest("path,person_id,camera_id\na,-2,0\n"); }).find("line 2") != std::string::npos);
  CHECK(error_of([] { parse_manifest("path,person_id,camera_id\na,1\n"); }).find("line 2") != std::string::npos);

  const fs::path dir = scratch_dir("manifest");
  write_manifest(dir / "m.csv", entries);
  CHECK(load_manifest(dir / "m.csv") == entries);
  fs::remove_all(dir);
}

namespace {

std::vector<ManifestEntry> grid_manifest(int ids, int per_id, int cameras) {
  std::vector<ManifestEntry> out;
  for (int id = 0; id < ids; ++id)
    for (int j = 0; j < per_id; ++j)
      out.push_back({"id" + std::to_string(id) + "_" + std::to_string(j), id, j % cameras});
  return out;
}

// Independent audit of the partition properties.
void audit_split(const std::vector<ManifestEntry>& entries, const DatasetSplit& s) {
  const std::set<int> train(s.train_ids.begin(), s.train_ids.end()), test(s.test_ids.begin(), s.test_ids.end());
  std::set<int> all;
  for (const auto& e : entries)
    if (e.person_id >= 0) all.insert(e.person_id);
  std::set<int> both;
  std::set_intersection(train.begin(), train.end(), test.begin(), test.end(), std::inserter(both, both.end()));
  CHECK(both.empty());
  std::set<int> uni(train);
  uni.insert(test.begin(), test.end());
  CHECK(uni == all);

  std::vector<int> role(entries.size(), 0);
  for (auto i : s.train) role[i] += 1;
  for (auto i : s.query) role[i] += 10;
  for (auto i : s.gallery) role[i] += 100;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const int id = entries[i].person_id;
    if (id >= 0 && train.count(id)) {
      CHECK(role[i] == 1);
    } else {
      CHECK((role[i] == 10 || role[i] == 100));
    }
    if (id < 0) CHECK(role[i] == 100);
  }
}

}  // namespace

TEST_CASE("split of 10 identities at fraction 0.5") {
  const auto entries = grid_manifest(10, 4, 2);
  const DatasetSplit s = split_dataset(entries, SplitSpec{});
  CHECK(s.train_ids.size() == 5);
  CHECK(s.test_ids.size() == 5);
  audit_split(entries, s);
  // 5 test ids x 2 cameras x 1 query
  CHECK(s.query.size() == 10);
}

TEST_CASE("a single-image test group yields no query") {
  std::vector<ManifestEntry> entries = grid_manifest(4, 4, 2);
  entries.push_back({"lonely", 99, 0});
  SplitSpec spec;
  for (spec.seed = 0; spec.seed < 20; ++spec.seed) {
    const DatasetSplit s = split_dataset(entries, spec);
    if (std::find(s.test_ids.begin(), s.test_ids.end(), 99) == s.test_ids.end()) continue;
    const std::size_t lonely = entries.size() - 1;
    CHECK(std::find(s.query.begin(), s.query.end(), lonely) == s.query.end());
    CHECK(std::find(s.gallery.begin(), s.gallery.end(), lonely) != s.gallery.end());
    return;
  }
  FAIL("no seed put the lonely identity in the test half");
}

TEST_CASE("100-identity split passes the partition audit and is seed-deterministic") {
  std::vector<ManifestEntry> entries = grid_manifest(100, 6, 2);
  entries.push_back({"junk0", -1, 0});
  entries.push_back({"junk1", -1, 1});
  SplitSpec spec;
  spec.seed = 3;
  const DatasetSplit a = split_dataset(entries, spec), b = split_dataset(entries, spec);
  audit_split(entries, a);
  CHECK(a.query == b.query);
  CHECK(a.train_ids == b.train_ids);
  spec.queries_per_group = 5;  // capped at group size - 1 = 2
  const DatasetSplit c = split_dataset(entries, spec);
  audit_split(entries, c);
  CHECK(c.query.size() == 2 * 2 * c.test_ids.size());
  CHECK_THROWS_AS(split_dataset(entries, SplitSpec{1.0, 1, 1}), InvalidArgument);
}

TEST_CASE("synthetic generator: noiseless images repeat the prototype") {
  SyntheticSpec spec;
  spec.num_ids = 3;
  spec.images_per_id = 4;
  spec.intra_noise = 0.0;
  spec.camera_shift = 0.0;
  const Dataset d = generate_synthetic(spec);
  REQUIRE(d.size() == 12);
  CHECK(d.tensors[0] == d.tensors[1]);
  CHECK_FALSE(d.tensors[0] == d.tensors[4]);
  CHECK(d.entries[1].camera_id == 1);
  CHECK(d.tensors[0].dims == std::vector<std::uint32_t>{32, 4, 8});
}

TEST_CASE("synthetic generator is byte-deterministic and validates counts") {
  SyntheticSpec spec;
  spec.num_ids = 4;
  const Dataset a = generate_synthetic(spec), b = generate_synthetic(spec);
  CHECK(a.tensors == b.tensors);
  CHECK(a.entries == b.entries);
  spec.num_ids = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidArgument);
}

TEST_CASE("class-mean separation over noise matches the configured ratio") {
  // Moment estimates straight from the tensors: within-(id, camera) spread
  // estimates the noise, the spread of identity means (camera offsets
  // removed) estimates the prototype scale.
  const SyntheticSpec spec;  // 20 ids x 8 images, 2 cameras
  const Dataset d = generate_synthetic(spec);
  const std::size_t m = d.tensors[0].element_count();
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < d.size(); ++i) groups[{d.entries[i].person_id, d.entries[i].camera_id}].push_back(i);

  double within = 0.0;
  std::size_t dof = 0;
  std::map<int, std::vector<double>> id_mean;
  std::map<int, std::vector<double>> cam_mean;
  std::map<int, int> cam_groups;
  for (const auto& [key, members] : groups) {
    std::vector<double> mean(m, 0.0);
    for (auto i : members)
      for (std::size_t e = 0; e < m; ++e) mean[e] += d.tensors[i].values[e] / members.size();
    for (auto i : members)
      for (std::size_t e = 0; e < m; ++e) within += std::pow(d.tensors[i].values[e] - mean[e], 2);
    dof += (members.size() - 1) * m;
    auto& im = id_mean[key.first];
    im.resize(m, 0.0);
    auto& cm = cam_mean[key.second];
    cm.resize(m, 0.0);
    ++cam_groups[key.second];
    for (std::size_t e = 0; e < m; ++e) {
      im[e] += mean[e] / spec.cameras;
      cm[e] += mean[e];
    }
  }
  const double noise = std::sqrt(within / dof);
  double between = 0.0;
  const double ids = static_cast<double>(id_mean.size());
  for (std::size_t e = 0; e < m; ++e) {
    double mu = 0.0;
    for (auto& [id, v] : id_mean) mu += v[e] / ids;
    for (auto& [id, v] : id_mean) between += std::pow(v[e] - mu, 2);
  }
  // identity means still carry noise / sqrt(images per id)
  const double sep2 = between / ((ids - 1) * m) - noise * noise / spec.images_per_id;
  const double ratio = std::sqrt(sep2) / noise;
  const double configured = 1.0 / spec.intra_noise;
  CHECK(std::abs(noise - spec.intra_noise) <= 0.1 * spec.intra_noise);
  CHECK(std::abs(ratio - configured) <= 0.1 * configured);
}

TEST_CASE("datasets round-trip through a directory") {
  SyntheticSpec spec;
  spec.num_ids = 2;
  spec.images_per_id = 2;
  const Dataset d = generate_synthetic(spec);
  const fs::path dir = scratch_dir("dataset");
  save_dataset(d, dir);
  const Dataset back = load_dataset(dir / "manifest.csv");
  CHECK(back.entries == d.entries);
  CHECK(back.tensors == d.tensors);
  fs::remove_all(dir);
}
