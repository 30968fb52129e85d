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

// Command-line front end: synth, train, eval, rank, gradcheck.
//
// stdout carries JSON only; diagnostics go to stderr. Exit codes: 0 success,
// 1 verification failure, 2 usage or configuration error, 3 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "subpool/error.hpp"
#include "subpool/experiment.hpp"
#include "subpool/gradcheck.hpp"
#include "subpool/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace subpool;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// Flags that map one-to-one onto config keys. Unset flags keep the config
// value.
struct FlagBinding {
  const char* flag;
  const char* key;
  std::string value;
};

std::vector<FlagBinding> synth_flags() {
  return {{"--ids", "synth.ids", {}},
          {"--per-id", "synth.per_id", {}},
          {"--cameras", "synth.cameras", {}},
          {"--channels", "synth.channels", {}},
          {"--height", "synth.height", {}},
          {"--width", "synth.width", {}},
          {"--noise", "synth.noise", {}},
          {"--camera-shift", "synth.camera_shift", {}},
          {"--structure", "synth.structure", {}},
          {"--out", "out", {}}};
}

std::vector<FlagBinding> train_flags() {
  return {{"--data", "data", {}},
          {"--out", "out", {}},
          {"--epochs", "train.epochs", {}},
          {"--lr", "optim.lr", {}},
          {"--loss", "model.loss", {}},
          {"--pooling", "model.pooling", {}},
          {"--metric", "model.metric", {}},
          {"--rank", "model.rank", {}},
          {"--batch-ids", "train.batch_ids", {}},
          {"--batch-instances", "train.batch_instances", {}},
          {"--eval-threads", "eval.threads", {}}};
}

struct ConfigFlags {
  std::string config_file;
  std::string preset = "desk";
  std::vector<std::string> sets;
  std::string seed;
  std::vector<FlagBinding> bindings;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_file, "key = value config file");
  cmd->add_option("--preset", flags.preset, "desk or full")->capture_default_str();
  cmd->add_option("--set", flags.sets, "override one key, key=value (repeatable)");
  cmd->add_option("--seed", flags.seed, "seed (default: $SUBPOOL_SEED, else 7)");
  for (auto& b : flags.bindings) cmd->add_option(b.flag, b.value, std::string("sets ") + b.key);
}

std::string env_seed() {
  const char* v = std::getenv("SUBPOOL_SEED");
  return v ? std::string(v) : std::string();
}

// Precedence: preset < $SUBPOOL_SEED < config file < --set < dedicated flags.
RunConfig build_config(const ConfigFlags& flags) {
  RunConfig cfg = RunConfig::preset(flags.preset);
  if (const std::string s = env_seed(); !s.empty()) cfg.set("seed", s);
  if (!flags.config_file.empty()) cfg.apply_file(flags.config_file);
  for (const auto& s : flags.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& b : flags.bindings)
    if (!b.value.empty()) cfg.set(b.key, b.value);
  if (!flags.seed.empty()) cfg.set("seed", flags.seed);
  cfg.finalize();
  return cfg;
}

void print_json(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

int cmd_synth(const ConfigFlags& flags) {
  const RunConfig cfg = build_config(flags);
  if (cfg.out.empty()) throw ConfigError("synth: --out is required");
  const Dataset data = generate_synthetic(cfg.synth);
  save_dataset(data, cfg.out);
  ordered_json j;
  j["manifest"] = (fs::path(cfg.out) / "manifest.csv").string();
  j["images"] = data.size();
  j["identities"] = cfg.synth.num_ids;
  j["seed"] = cfg.seed;
  print_json(j);
  return kExitOk;
}

int cmd_train(const ConfigFlags& flags) {
  RunConfig cfg = build_config(flags);
  if (cfg.data.empty()) throw ConfigError("train: no dataset, pass --data or set data");
  if (cfg.out.empty()) throw ConfigError("train: --out is required");
  cfg.data = fs::absolute(cfg.data).string();

  const Dataset data = load_dataset(cfg.data);
  const DatasetSplit split = split_dataset(data.entries, cfg.split);
  const ModelConfig model = model_for(cfg, data);
  const auto evaluate_now = [&](const ModelConfig& m, const ParamStore& p) {
    return evaluate(describe_entries(data, split.query, m, p, cfg.eval.threads),
                    describe_entries(data, split.gallery, m, p, cfg.eval.threads), cfg.eval);
  };
  const TrainResult trained = train(training_set(data, split), model, cfg.adam, cfg.train, evaluate_now);
  for (const auto& [epoch, report] : trained.snapshots) {
    std::cerr << "epoch " << epoch << ": mAP " << report.mean_ap << ", rank-1 "
              << (report.cmc.empty() ? 0.0 : report.cmc[0]) << "\n";
  }

  const fs::path out(cfg.out);
  fs::create_directories(out);
  const fs::path ckpt_dir = out / "checkpoint";
  save_checkpoint(ckpt_dir, Checkpoint{cfg, trained.model, trained.classes, trained.params, trained.adam});
  write_file(out / "run.cfg", cfg.to_text());
  std::string log = "epoch,loss_id,loss_tl,lr\n";
  for (const auto& e : trained.log) {
    log += std::to_string(e.epoch) + "," + fmt17(e.loss_id) + "," + fmt17(e.loss_tl) + "," + fmt17(e.learning_rate) +
           "\n";
  }
  write_file(out / "train_log.csv", log);

  // Report on the stored (float32) parameters so it matches a later `eval`.
  const Checkpoint stored = load_checkpoint(ckpt_dir);
  const EvalReport report = evaluate_now(stored.model, stored.params);

  ordered_json j;
  j["checkpoint"] = ckpt_dir.string();
  j["epochs"] = cfg.train.epochs;
  j["seed"] = cfg.seed;
  if (!trained.log.empty()) {
    j["final_loss_id"] = trained.log.back().loss_id;
    j["final_loss_tl"] = trained.log.back().loss_tl;
  }
  j["jitter_count"] = trained.jitter_count;
  j["eval"] = ordered_json::parse(report_to_json(report));
  print_json(j);
  return kExitOk;
}

struct EvalFlags {
  std::string checkpoint;
  std::string data;
  std::string query_manifest;
  std::string gallery_manifest;
  std::string mode;
  std::string multi_query_pooling;
  std::string cross_camera;
  std::string metric;
  std::size_t rank = 0;
  std::size_t threads = 0;
  std::size_t export_depth = 0;
  std::string ranking_out;
};

void add_eval_flags(CLI::App* cmd, EvalFlags& f) {
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint directory written by train");
  cmd->add_option("--data", f.data, "override the checkpoint's dataset manifest");
  cmd->add_option("--query-manifest", f.query_manifest, "manifest of query descriptor tensors");
  cmd->add_option("--gallery-manifest", f.gallery_manifest, "manifest of gallery descriptor tensors");
  cmd->add_option("--mode", f.mode, "single or multi");
  cmd->add_option("--multi-query-pooling", f.multi_query_pooling, "average or max");
  cmd->add_option("--cross-camera", f.cross_camera, "true or false");
  cmd->add_option("--metric", f.metric, "descriptor files only: flattened-euclidean or projection");
  cmd->add_option("--rank", f.rank, "descriptor files only: subspace rank for the projection metric");
  cmd->add_option("--eval-threads", f.threads, "worker threads for per-query evaluation");
  cmd->add_option("--ranking-out", f.ranking_out, "ranking CSV path (default ranking.csv)");
}

std::vector<Sample> descriptor_samples(const fs::path& manifest) {
  const Dataset d = load_dataset(manifest);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& t = d.tensors[i];
    out.push_back(Sample{std::vector<double>(t.values.begin(), t.values.end()), d.entries[i].person_id,
                         d.entries[i].camera_id, d.entries[i].path});
  }
  return out;
}

int cmd_eval(const EvalFlags& f) {
  RunConfig cfg;
  std::vector<Sample> query, gallery;
  const bool from_descriptors = !f.query_manifest.empty() || !f.gallery_manifest.empty();
  if (from_descriptors == !f.checkpoint.empty()) {
    throw ConfigError("eval: pass either --checkpoint or both --query-manifest and --gallery-manifest");
  }
  const auto apply_overrides = [&](RunConfig& c) {
    if (!f.mode.empty()) c.set("eval.mode", f.mode);
    if (!f.multi_query_pooling.empty()) c.set("eval.multi_query_pooling", f.multi_query_pooling);
    if (!f.cross_camera.empty()) c.set("eval.cross_camera", f.cross_camera);
    if (f.threads) c.eval.threads = f.threads;
  };

  if (from_descriptors) {
    if (f.query_manifest.empty() || f.gallery_manifest.empty()) {
      throw ConfigError("eval: descriptor mode needs both --query-manifest and --gallery-manifest");
    }
    if (!f.metric.empty()) cfg.set("model.metric", f.metric);
    apply_overrides(cfg);
    cfg.finalize();
    cfg.eval.subspace_rank = f.rank ? f.rank : 1;
    cfg.eval.validate();
    query = descriptor_samples(f.query_manifest);
    gallery = descriptor_samples(f.gallery_manifest);
  } else {
    Checkpoint ckpt = load_checkpoint(f.checkpoint);
    cfg = ckpt.config;
    if (!f.data.empty()) cfg.data = fs::absolute(f.data).string();
    apply_overrides(cfg);
    cfg.finalize();
    const Dataset data = load_dataset(cfg.data);
    const DatasetSplit split = split_dataset(data.entries, cfg.split);
    query = describe_entries(data, split.query, ckpt.model, ckpt.params, cfg.eval.threads);
    gallery = describe_entries(data, split.gallery, ckpt.model, ckpt.params, cfg.eval.threads);
  }

  const EvalReport report = evaluate(query, gallery, cfg.eval);
  if (f.export_depth > 0) {
    const fs::path path = f.ranking_out.empty() ? fs::path("ranking.csv") : fs::path(f.ranking_out);
    const auto rows = export_ranking(query, gallery, cfg.eval, f.export_depth);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_ranking_csv(out, rows);
    std::cerr << "ranking written to " << path.string() << " (" << rows.size() << " rows)\n";
  }
  std::cout << report_to_json(report) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& options) {
  const auto stages = run_gradcheck(options);
  ordered_json j;
  j["stages"] = ordered_json::array();
  bool all = true;
  for (const auto& s : stages) {
    j["stages"].push_back({{"stage", s.name},
                           {"max_rel_error", s.max_rel_error},
                           {"tolerance", s.tolerance},
                           {"evaluations", s.evaluations},
                           {"passed", s.passed}});
    if (!s.passed) {
      all = false;
      std::cerr << "gradcheck: stage " << s.name << " failed, relative error " << s.max_rel_error << " > "
                << s.tolerance << "\n";
    }
  }
  j["passed"] = all;
  print_json(j);
  return all ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subspace pooling for person re-identification"};
  app.require_subcommand(1);

  ConfigFlags synth_cfg;
  synth_cfg.bindings = synth_flags();
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_config_flags(synth, synth_cfg);

  ConfigFlags train_cfg;
  train_cfg.bindings = train_flags();
  auto* train_cmd = app.add_subcommand("train", "train a model and evaluate it on the held-out split");
  add_config_flags(train_cmd, train_cfg);

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or descriptor files");
  add_eval_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--export-ranking", eval_flags.export_depth, "write the top-N ranking CSV");

  EvalFlags rank_flags;
  rank_flags.export_depth = 10;
  auto* rank_cmd = app.add_subcommand("rank", "eval with --export-ranking (default depth 10)");
  add_eval_flags(rank_cmd, rank_flags);
  rank_cmd->add_option("--export-ranking,--depth", rank_flags.export_depth, "ranking depth")->capture_default_str();

  GradcheckOptions gc;
  std::string gc_seed;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  gc_cmd->add_option("--stage", gc.stage, "run one stage only");
  gc_cmd->add_flag("--degenerate", gc.degenerate, "add the near-degenerate spectrum pooling case");
  gc_cmd->add_option("--seed", gc_seed, "seed (default: $SUBPOOL_SEED, else 7)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_cfg);
    if (*train_cmd) return cmd_train(train_cfg);
    if (*eval_cmd) return cmd_eval(eval_flags);
    if (*rank_cmd) return cmd_eval(rank_flags);
    if (*gc_cmd) {
      RunConfig seed_cfg;
      if (const std::string s = env_seed(); !s.empty()) seed_cfg.set("seed", s);
      if (!gc_seed.empty()) seed_cfg.set("seed", gc_seed);
      gc.seed = seed_cfg.seed;
      return cmd_gradcheck(gc);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
