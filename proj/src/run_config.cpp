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

#include "subpool/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace subpool {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

template <typename E, std::size_t N>
E parse_enum(const std::string& key, const std::string& v, const EnumName<E> (&names)[N]) {
  for (const auto& n : names)
    if (v == n.name) return n.value;
  std::string options;
  for (const auto& n : names) options += std::string(options.empty() ? "" : "|") + n.name;
  throw ConfigError(key + ": expected one of " + options + ", got '" + v + "'");
}

template <typename E, std::size_t N>
std::string enum_name(E value, const EnumName<E> (&names)[N]) {
  for (const auto& n : names)
    if (n.value == value) return n.name;
  return "?";
}

constexpr EnumName<SyntheticStructure> kStructures[] = {{SyntheticStructure::prototype, "prototype"},
                                                        {SyntheticStructure::redundant, "redundant"}};
constexpr EnumName<InputMode> kInputs[] = {{InputMode::features, "features"}, {InputMode::images, "images"}};
constexpr EnumName<LossMode> kLosses[] = {{LossMode::id, "id"}, {LossMode::tl, "tl"}, {LossMode::id_tl, "id+tl"}};
constexpr EnumName<Reduction> kReductions[] = {{Reduction::mean, "mean"}, {Reduction::sum, "sum"}};
constexpr EnumName<PoolingMode> kPoolings[] = {{PoolingMode::subspace, "subspace"}, {PoolingMode::average, "average"}};
constexpr EnumName<DescriptorMetric> kMetrics[] = {{DescriptorMetric::flattened_euclidean, "flattened-euclidean"},
                                                   {DescriptorMetric::projection, "projection"}};
constexpr EnumName<QueryMode> kModes[] = {{QueryMode::single, "single"}, {QueryMode::multi, "multi"}};
constexpr EnumName<MultiQueryPooling> kMqPoolings[] = {{MultiQueryPooling::average, "average"},
                                                       {MultiQueryPooling::max, "max"}};

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty() || trim(v) == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Key {
  const char* name;
  const char* doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SIZE_KEY(NAME, FIELD, DOC)                                                     \
  Key {                                                                                \
    NAME, DOC, [](const RunConfig& c) { return fmt(static_cast<std::size_t>(c.FIELD)); }, \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_size(NAME, v); }     \
  }
#define DOUBLE_KEY(NAME, FIELD, DOC)                                              \
  Key {                                                                           \
    NAME, DOC, [](const RunConfig& c) { return fmt(c.FIELD); },                   \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(NAME, v); } \
  }
#define BOOL_KEY(NAME, FIELD, DOC)                                              \
  Key {                                                                         \
    NAME, DOC, [](const RunConfig& c) { return fmt(c.FIELD); },                 \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); } \
  }
#define ENUM_KEY(NAME, FIELD, TABLE, DOC)                                                \
  Key {                                                                                  \
    NAME, DOC, [](const RunConfig& c) { return enum_name(c.FIELD, TABLE); },             \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_enum(NAME, v, TABLE); } \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      Key{"seed", "seed shared by synthesis, split, initialization and sampling",
          [](const RunConfig& c) { return std::to_string(c.seed); },
          [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      Key{"data", "dataset manifest (CSV path,person_id,camera_id)", [](const RunConfig& c) { return c.data; },
          [](RunConfig& c, const std::string& v) { c.data = v; }},
      Key{"out", "output directory", [](const RunConfig& c) { return c.out; },
          [](RunConfig& c, const std::string& v) { c.out = v; }},

      SIZE_KEY("synth.ids", synth.num_ids, "identities to synthesize"),
      SIZE_KEY("synth.per_id", synth.images_per_id, "images per identity"),
      SIZE_KEY("synth.cameras", synth.cameras, "cameras; image j uses camera j mod cameras"),
      SIZE_KEY("synth.channels", synth.channels, "feature-map channels c"),
      SIZE_KEY("synth.height", synth.height, "feature-map height h"),
      SIZE_KEY("synth.width", synth.width, "feature-map width w"),
      DOUBLE_KEY("synth.noise", synth.intra_noise, "per-image noise std (prototype RMS is 1)"),
      DOUBLE_KEY("synth.camera_shift", synth.camera_shift, "per-camera additive field std"),
      ENUM_KEY("synth.structure", synth.structure, kStructures, "prototype|redundant"),
      DOUBLE_KEY("synth.decay", synth.spectrum_decay, "singular-value decay ratio of the identity structure"),
      SIZE_KEY("synth.latent_rank", synth.latent_rank, "latent factors of the redundant structure"),

      DOUBLE_KEY("split.train_fraction", split.train_fraction, "fraction of identities used for training"),
      SIZE_KEY("split.queries_per_group", split.queries_per_group, "queries per (id, camera) test group"),

      ENUM_KEY("model.input", model.input, kInputs, "features (precomputed maps) | images (conv stages)"),
      Key{"model.conv_widths", "conv stage widths for image input, comma separated",
          [](const RunConfig& c) { return fmt_list(c.model.conv_widths); },
          [](RunConfig& c, const std::string& v) { c.model.conv_widths = parse_list("model.conv_widths", v); }},
      SIZE_KEY("model.conv_stride", model.conv_stride, "stride of every 3x3 conv stage"),
      SIZE_KEY("model.reduced_channels", model.reduced_channels, "output channels d of the 1x1 reduction"),
      SIZE_KEY("model.rank", model.rank, "pooled subspace rank k"),
      ENUM_KEY("model.loss", model.loss, kLosses, "id|tl|id+tl"),
      DOUBLE_KEY("model.margin", model.margin, "triplet margin m"),
      ENUM_KEY("model.reduction", model.reduction, kReductions, "triplet reduction over anchors: mean|sum"),
      DOUBLE_KEY("model.triplet_weight", model.triplet_weight, "lambda in L_id + lambda * L_tl"),
      ENUM_KEY("model.pooling", model.pooling, kPoolings, "subspace|average"),
      ENUM_KEY("model.metric", model.metric, kMetrics, "descriptor distance for triplet loss and retrieval"),

      DOUBLE_KEY("optim.lr", adam.learning_rate, "Adam base learning rate"),
      DOUBLE_KEY("optim.beta1", adam.beta1, "Adam beta1"),
      DOUBLE_KEY("optim.beta2", adam.beta2, "Adam beta2"),
      DOUBLE_KEY("optim.epsilon", adam.epsilon, "Adam epsilon"),
      SIZE_KEY("optim.decay_start", adam.decay_start, "last epoch at the base rate"),
      DOUBLE_KEY("optim.decay_factor", adam.decay_factor, "total exponential decay reached after decay_span epochs"),
      SIZE_KEY("optim.decay_span", decay_span, "epochs over which decay_factor is reached, 0 = to the last epoch"),

      SIZE_KEY("train.epochs", train.epochs, "training epochs"),
      SIZE_KEY("train.batch_ids", train.batch_ids, "identities per batch P"),
      SIZE_KEY("train.batch_instances", train.batch_instances, "images per identity K"),
      SIZE_KEY("train.steps_per_epoch", train.steps_per_epoch, "0 = max(1, identities / P)"),
      BOOL_KEY("train.freeze_conv", train.freeze_conv, "keep conv stages at their initialization"),
      SIZE_KEY("train.eval_every", train.eval_every, "epochs between evaluation snapshots, 0 = off"),

      ENUM_KEY("eval.mode", eval.mode, kModes, "single|multi query protocol"),
      BOOL_KEY("eval.cross_camera", eval.cross_camera, "drop same-id same-camera gallery entries"),
      SIZE_KEY("eval.cmc_max_rank", eval.cmc_max_rank, "CMC curve length"),
      SIZE_KEY("eval.f_cutoff", eval.f_cutoff, "F-score cutoff rank"),
      ENUM_KEY("eval.multi_query_pooling", eval.pooling, kMqPoolings, "average|max"),
      SIZE_KEY("eval.threads", eval.threads, "worker threads for evaluation"),
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY
#undef ENUM_KEY

const Key& find_key(const std::string& name) {
  for (const auto& k : key_table())
    if (name == k.name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

RunConfig::RunConfig() {
  adam.learning_rate = 1e-3;
  adam.decay_start = 150;
  train.epochs = 200;
}

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name == "full") {
    c.adam.learning_rate = 2e-4;
    c.adam.decay_start = 150;
    c.adam.decay_factor = 0.1;
    c.train.epochs = 300;
    c.train.batch_ids = 32;
    c.train.batch_instances = 4;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
}

void RunConfig::set(const std::string& key, const std::string& value) { find_key(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return find_key(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& k : key_table()) v.emplace_back(k.name);
    return v;
  }();
  return names;
}

std::string RunConfig::describe_key(const std::string& key) { return find_key(key).doc; }

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(*this) + "  # " + k.doc + "\n";
  return out;
}

void RunConfig::finalize() {
  synth.seed = seed;
  split.seed = seed;
  train.seed = seed;
  adam.decay_span = decay_span ? decay_span : std::max<std::size_t>(1, train.epochs > adam.decay_start
                                                                         ? train.epochs - adam.decay_start
                                                                         : 1);
  eval.metric = model.metric;
  eval.subspace_rank = model.pooling == PoolingMode::subspace ? model.rank : 1;
  try {
    synth.validate();
    adam.validate();
    eval.validate();
    if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
      throw ConfigError("split.train_fraction must lie in (0, 1)");
    }
    if (split.queries_per_group < 1) throw ConfigError("split.queries_per_group must be >= 1");
    if (train.batch_ids < 2 || train.batch_instances < 2) {
      throw ConfigError("train.batch_ids and batch_instances must be >= 2");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace subpool
