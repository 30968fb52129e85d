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

#include "subpool/data_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "subpool/error.hpp"

namespace subpool {

namespace {

constexpr unsigned char kMagic[4] = {'S', 'P', 'T', 'F'};
constexpr unsigned char kVersion = 1;
constexpr unsigned char kDtypeF32 = 1;

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(std::span<const unsigned char> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

std::vector<unsigned char> encode_tensor(const Tensor& t) {
  if (t.dims.empty() || t.dims.size() > 0xffff) throw InvalidArgument("encode_tensor: rank must be in [1, 65535]");
  for (auto d : t.dims)
    if (d == 0) throw InvalidArgument("encode_tensor: zero dimension");
  if (t.values.size() != t.element_count()) {
    throw InvalidArgument("encode_tensor: " + std::to_string(t.values.size()) + " values for " +
                          std::to_string(t.element_count()) + " elements");
  }
  for (float v : t.values)
    if (!std::isfinite(v)) throw NumericError("encode_tensor: non-finite payload value");

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(8 + 4 * t.dims.size() + 4 * t.values.size());
  out.push_back(kVersion);
  out.push_back(kDtypeF32);
  put_u16(out, static_cast<std::uint16_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8) {
    throw IoError("tensor: header needs 8 bytes, file has " + std::to_string(bytes.size()));
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw IoError("tensor: bad magic");
  if (bytes[4] != kVersion) throw IoError("tensor: unsupported version " + std::to_string(bytes[4]));
  if (bytes[5] != kDtypeF32) throw IoError("tensor: unsupported dtype " + std::to_string(bytes[5]));
  const std::size_t rank = get_u16(bytes, 6);
  if (rank == 0) throw IoError("tensor: rank 0");
  const std::size_t header = 8 + 4 * rank;
  if (bytes.size() < header) {
    throw IoError("tensor: expected at least " + std::to_string(header) + " bytes of header, got " +
                  std::to_string(bytes.size()));
  }
  Tensor t;
  t.dims.resize(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    t.dims[i] = get_u32(bytes, 8 + 4 * i);
    if (t.dims[i] == 0) throw IoError("tensor: zero dimension at axis " + std::to_string(i));
    count *= t.dims[i];
  }
  const std::size_t expected = header + 4 * count;
  if (bytes.size() != expected) {
    throw IoError("tensor: expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) t.values[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Tensor to_tensor(const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.values.reserve(m.size());
  for (double v : m.data()) t.values.push_back(static_cast<float>(v));
  return t;
}

Matrix to_matrix(const Tensor& t) {
  if (t.dims.empty()) throw InvalidArgument("to_matrix: empty tensor");
  // Leading axis becomes rows; everything after it is flattened into columns.
  const std::size_t rows = t.dims[0];
  const std::size_t cols = t.element_count() / rows;
  std::vector<double> data(t.values.begin(), t.values.end());
  return Matrix(rows, cols, std::move(data));
}

namespace {

int parse_int_field(const std::string& field, const char* name, std::size_t line) {
  int value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    throw IoError("manifest line " + std::to_string(line) + ": cannot parse " + name + " '" + field + "'");
  }
  return value;
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw IoError("manifest line 1: missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw IoError("manifest line 1: expected header '" + std::string(kManifestHeader) + "', got '" + line + "'");
  }
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw IoError("manifest line " + std::to_string(line_no) + ": expected 3 comma-separated fields");
    }
    ManifestEntry e;
    e.path = line.substr(0, c1);
    if (e.path.empty()) throw IoError("manifest line " + std::to_string(line_no) + ": empty path");
    e.person_id = parse_int_field(line.substr(c1 + 1, c2 - c1 - 1), "person_id", line_no);
    e.camera_id = parse_int_field(line.substr(c2 + 1), "camera_id", line_no);
    if (e.person_id < -1) {
      throw IoError("manifest line " + std::to_string(line_no) + ": person_id must be >= -1");
    }
    if (!seen.insert(e.path).second) {
      throw IoError("manifest line " + std::to_string(line_no) + ": duplicate path '" + e.path + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << kManifestHeader << '\n';
    for (const auto& e : entries) out << e.path << ',' << e.person_id << ',' << e.camera_id << '\n';
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

DatasetSplit split_dataset(std::span<const ManifestEntry> entries, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw InvalidArgument("split_dataset: train fraction must lie in (0, 1)");
  }
  if (spec.queries_per_group < 1) throw InvalidArgument("split_dataset: queries per group must be >= 1");

  std::vector<int> ids;
  for (const auto& e : entries)
    if (e.person_id >= 0) ids.push_back(e.person_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw InvalidArgument("split_dataset: need at least 2 identities");

  std::mt19937_64 rng(spec.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(ids.size())));
  if (n_train == 0 || n_train >= ids.size()) {
    throw InvalidArgument("split_dataset: fraction " + std::to_string(spec.train_fraction) + " of " +
                          std::to_string(ids.size()) + " identities leaves one side empty");
  }

  DatasetSplit split;
  split.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  const std::set<int> train_set(split.train_ids.begin(), split.train_ids.end());

  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.person_id < 0) {
      split.gallery.push_back(i);
    } else if (train_set.contains(e.person_id)) {
      split.train.push_back(i);
    } else {
      groups[{e.person_id, e.camera_id}].push_back(i);
    }
  }
  for (auto& [key, members] : groups) {
    if (members.size() < 2) {
      split.gallery.insert(split.gallery.end(), members.begin(), members.end());
      continue;
    }
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t q = std::min(spec.queries_per_group, members.size() - 1);
    split.query.insert(split.query.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(q));
    split.gallery.insert(split.gallery.end(), members.begin() + static_cast<std::ptrdiff_t>(q), members.end());
  }
  std::sort(split.query.begin(), split.query.end());
  std::sort(split.gallery.begin(), split.gallery.end());
  return split;
}

}  // namespace subpool
