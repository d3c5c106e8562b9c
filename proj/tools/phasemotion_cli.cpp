// Copyright 2026 The phasemotion Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Command-line front end: synth, train, eval, predict, gradcheck, ablate.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include "json.hpp"
#include <optional>
#include <string>
#include <vector>

#include "phasemotion/phasemotion.hpp"

namespace pm = phasemotion;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Flag values shared by train, eval, predict and ablate.
struct RunFlags {
  std::string config;
  std::string skeleton;
  std::string data;
  std::string val;
  std::string test;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t epochs = pm::TrainConfig{}.epochs;
  double lr = pm::TrainConfig{}.learning_rate;
  std::size_t batch = pm::TrainConfig{}.batch_size;
  double dropout = pm::TrainConfig{}.dropout;
  double clip = pm::TrainConfig{}.clip_threshold;
  std::size_t hidden = pm::ModelConfig{}.hidden;
  std::vector<std::size_t> dilations = pm::ModelConfig{}.dilations;
  std::size_t kernel = pm::ModelConfig{}.kernel;
  std::size_t channels = pm::ModelConfig{}.channels;
  std::size_t observed = pm::ModelConfig{}.observed;
  std::size_t horizon = pm::ModelConfig{}.horizon;
  std::size_t stride = 1;
  double fps = 25.0;
  bool no_explicit = false;
  bool no_implicit = false;
  bool no_displacement = false;
};

class ExistingPath : public CLI::Validator {
 public:
  ExistingPath() : CLI::Validator("PATH") {
    func_ = [](std::string& p) {
      return fs::exists(p) ? std::string() : "path does not exist: " + p;
    };
  }
};

// Registers every shared flag; returns the options so config values can be
// applied to the ones the command line left untouched.
std::map<std::string, CLI::Option*> add_run_flags(CLI::App& app, RunFlags& f, bool model_flags,
                                                  bool train_flags) {
  std::map<std::string, CLI::Option*> o;
  o["config"] = app.add_option("--config", f.config, "JSON file mirroring the flag names")
                    ->check(ExistingPath());
  o["skeleton"] = app.add_option("--skeleton", f.skeleton, "skeleton JSON (default: toy7)")
                      ->check(ExistingPath());
  o["out"] = app.add_option("--out", f.out, "output directory");
  o["seed"] = app.add_option("--seed", f.seed, "initialisation and shuffling seed");
  o["fps"] = app.add_option("--fps", f.fps, "frames per second of the data");
  o["stride"] = app.add_option("--stride", f.stride, "window stride in frames");
  if (train_flags) {
    o["epochs"] = app.add_option("--epochs", f.epochs);
    o["lr"] = app.add_option("--lr", f.lr);
    o["batch"] = app.add_option("--batch", f.batch);
    o["dropout"] = app.add_option("--dropout", f.dropout);
    o["clip"] = app.add_option("--clip", f.clip);
  }
  if (model_flags) {
    o["hidden"] = app.add_option("--hidden", f.hidden);
    o["dilations"] = app.add_option("--dilations", f.dilations, "comma-separated list")
                         ->delimiter(',');
    o["kernel"] = app.add_option("--kernel", f.kernel);
    o["channels"] = app.add_option("--channels", f.channels, "conv channels per branch");
    o["observed"] = app.add_option("--observed", f.observed, "observed frames N+1");
    o["horizon"] = app.add_option("--horizon", f.horizon, "predicted frames n");
    o["no-explicit"] = app.add_flag("--no-explicit", f.no_explicit);
    o["no-implicit"] = app.add_flag("--no-implicit", f.no_implicit);
    o["no-displacement"] = app.add_flag("--no-displacement", f.no_displacement);
  }
  return o;
}

template <typename T>
void take(const nlohmann::json& cfg, const std::string& key,
          const std::map<std::string, CLI::Option*>& opts, T& target) {
  if (!cfg.contains(key)) return;
  const auto it = opts.find(key);
  if (it == opts.end()) throw pm::UsageError("config key '" + key + "' does not apply here");
  if (it->second->count() > 0) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw pm::ConfigError("config key '" + key + "' has the wrong type");
  }
}

// Flags given on the command line win over the config file, which wins over
// the built-in defaults.
void apply_config(RunFlags& f, const std::map<std::string, CLI::Option*>& opts) {
  if (f.config.empty()) return;
  std::ifstream in(f.config);
  nlohmann::json cfg;
  try {
    in >> cfg;
  } catch (const nlohmann::json::parse_error& e) {
    throw pm::ConfigError("config " + f.config + ": " + e.what());
  }
  if (!cfg.is_object()) throw pm::ConfigError("config " + f.config + " is not a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    if (key == "data" || key == "val" || key == "test") continue;
    if (!opts.contains(key)) throw pm::UsageError("config key '" + key + "' does not apply here");
  }
  take(cfg, "skeleton", opts, f.skeleton);
  take(cfg, "out", opts, f.out);
  take(cfg, "seed", opts, f.seed);
  take(cfg, "fps", opts, f.fps);
  take(cfg, "stride", opts, f.stride);
  take(cfg, "epochs", opts, f.epochs);
  take(cfg, "lr", opts, f.lr);
  take(cfg, "batch", opts, f.batch);
  take(cfg, "dropout", opts, f.dropout);
  take(cfg, "clip", opts, f.clip);
  take(cfg, "hidden", opts, f.hidden);
  take(cfg, "dilations", opts, f.dilations);
  take(cfg, "kernel", opts, f.kernel);
  take(cfg, "channels", opts, f.channels);
  take(cfg, "observed", opts, f.observed);
  take(cfg, "horizon", opts, f.horizon);
  take(cfg, "no-explicit", opts, f.no_explicit);
  take(cfg, "no-implicit", opts, f.no_implicit);
  take(cfg, "no-displacement", opts, f.no_displacement);
  const std::pair<const char*, std::string*> paths[] = {
      {"data", &f.data}, {"val", &f.val}, {"test", &f.test}};
  for (const auto& [key, target] : paths) {
    if (cfg.contains(key) && opts.contains(key) && opts.at(key)->count() == 0) {
      *target = cfg.at(key).get<std::string>();
    }
  }
}

pm::ModelConfig model_config(const RunFlags& f) {
  pm::ModelConfig c;
  c.hidden = f.hidden;
  c.dilations = f.dilations;
  c.kernel = f.kernel;
  c.channels = f.channels;
  c.observed = f.observed;
  c.horizon = f.horizon;
  c.use_explicit = !f.no_explicit;
  c.use_implicit = !f.no_implicit;
  c.use_displacement = !f.no_displacement;
  return c;
}

pm::TrainConfig train_config(const RunFlags& f) {
  pm::TrainConfig c;
  c.epochs = f.epochs;
  c.learning_rate = f.lr;
  c.batch_size = f.batch;
  c.dropout = f.dropout;
  c.clip_threshold = f.clip;
  c.seed = f.seed;
  return c;
}

pm::Skeleton skeleton_of(const RunFlags& f) {
  return f.skeleton.empty() ? pm::toy_skeleton() : pm::load_skeleton(f.skeleton);
}

std::vector<pm::SampleWindow> windows_from(const std::string& dir, const pm::Skeleton& s,
                                           std::size_t observed, std::size_t horizon,
                                           std::size_t stride) {
  if (!fs::is_directory(dir)) throw pm::UsageError("data directory not found: " + dir);
  return pm::make_windows(pm::load_dataset(dir, s).sequences, observed, horizon, stride);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

fs::path out_dir(const std::string& out) {
  fs::create_directories(out);
  return fs::path(out);
}

std::string window_file(const pm::SampleWindow& w) {
  return w.source + "@" + std::to_string(w.start) + ".csv";
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& kind_name, std::size_t frames, std::size_t count,
              std::uint64_t seed, const std::string& skeleton, const std::string& out) {
  const pm::SynthKind kind = pm::parse_synth_kind(kind_name);
  const pm::Skeleton s = skeleton.empty() ? pm::toy_skeleton() : pm::load_skeleton(skeleton);
  if (frames < 1) throw pm::UsageError("--frames must be >= 1");
  const fs::path dir = out_dir(out);
  for (std::size_t i = 0; i < count; ++i) {
    const fs::path file = dir / (std::string(pm::to_string(kind)) + "_" + std::to_string(i) + ".csv");
    pm::save_csv(file.string(), pm::synth(kind, s, frames, pm::mix_seed(seed, i)), s);
    std::cout << file.string() << "\t" << frames << " frames\n";
  }
  return 0;
}

int cmd_train(const RunFlags& f) {
  const pm::Skeleton s = skeleton_of(f);
  const pm::ModelConfig mc = model_config(f);
  const pm::TrainConfig tc = train_config(f);
  mc.validate();
  tc.validate();
  if (f.data.empty()) throw pm::UsageError("train needs --data");
  const auto train_set = windows_from(f.data, s, mc.observed, mc.horizon, f.stride);
  std::vector<pm::SampleWindow> val_set;
  if (!f.val.empty()) val_set = windows_from(f.val, s, mc.observed, mc.horizon, f.stride);
  const fs::path dir = out_dir(f.out);

  pm::Model model = pm::make_model(mc, s, f.seed);
  std::ofstream log(dir / "loss_log.tsv", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + (dir / "loss_log.tsv").string());
  log << "epoch\ttrain_loss\tval_mpjpe_400ms\n";
  const pm::TrainResult res = pm::train(model, train_set, val_set, tc, f.fps,
                                        [&log](const pm::EpochRecord& r) {
                                          log << pm::format_log_line(r) << '\n';
                                          log.flush();
                                          std::cerr << pm::format_log_line(r) << '\n';
                                        });
  pm::save_checkpoint((dir / "checkpoint.json").string(), model, &res.optimizer);
  std::cout << "wrote " << (dir / "checkpoint.json").string() << " and "
            << (dir / "loss_log.tsv").string() << "\n";
  if (!val_set.empty()) {
    std::vector<int> hs;
    for (int ms : pm::default_horizons_ms())
      if (pm::horizon_frame(ms, f.fps) <= mc.horizon) hs.push_back(ms);
    std::cout << pm::format_table(pm::horizon_report(model, val_set, f.fps, hs),
                                  "validation MPJPE (mm)");
  }
  return 0;
}

pm::Model load_model(const std::string& path) {
  if (path.empty() || !fs::is_regular_file(path)) {
    throw pm::UsageError("checkpoint not found: " + (path.empty() ? "(none)" : path));
  }
  return pm::load_checkpoint(path).model;
}

std::vector<int> horizons_for(const std::vector<int>& requested, double fps, std::size_t n) {
  if (!requested.empty()) return requested;
  std::vector<int> hs;
  for (int ms : pm::default_horizons_ms())
    if (pm::horizon_frame(ms, fps) <= n) hs.push_back(ms);
  return hs;
}

int cmd_eval(const std::string& checkpoint, const std::string& baseline_name,
             const std::string& predictions, const std::vector<int>& horizons, RunFlags f) {
  std::optional<pm::Model> model;
  std::size_t observed = f.observed, horizon = f.horizon;
  if (baseline_name.empty()) {
    model = load_model(checkpoint);
    observed = model->config.observed;
    horizon = model->config.horizon;
  }
  const pm::Skeleton s = model ? model->skeleton : skeleton_of(f);
  if (f.data.empty()) throw pm::UsageError("eval needs --data");
  const auto windows = windows_from(f.data, s, observed, horizon, f.stride);
  const std::vector<int> hs = horizons_for(horizons, f.fps, horizon);

  pm::WindowPredictor predictor;
  std::string title = "MPJPE (mm)";
  if (!predictions.empty()) {
    if (!fs::is_directory(predictions)) throw pm::UsageError("not a directory: " + predictions);
    predictor = [&](const pm::SampleWindow& w) {
      return pm::load_csv((fs::path(predictions) / window_file(w)).string(), s);
    };
    title = "MPJPE (mm), saved";
  } else if (!baseline_name.empty()) {
    const pm::BaselineKind kind = pm::parse_baseline_kind(baseline_name);
    predictor = [kind](const pm::SampleWindow& w) { return pm::baseline(kind, w); };
    title = "MPJPE (mm), " + baseline_name;
  } else {
    predictor = [&](const pm::SampleWindow& w) { return pm::predict(*model, w.observed).poses; };
  }
  const pm::HorizonTable table = pm::horizon_report(predictor, windows, hs, f.fps, horizon);
  std::cout << pm::format_table(table, title);
  const fs::path dir = out_dir(f.out);
  write_text(dir / "report.json", pm::to_json(table).dump(1) + "\n");
  return 0;
}

int cmd_predict(const std::string& checkpoint, RunFlags f) {
  const pm::Model model = load_model(checkpoint);
  if (f.data.empty()) throw pm::UsageError("predict needs --data");
  const auto windows =
      windows_from(f.data, model.skeleton, model.config.observed, model.config.horizon, f.stride);
  const fs::path dir = out_dir(f.out);
  for (const auto& w : windows) {
    const fs::path file = dir / window_file(w);
    pm::save_csv(file.string(), pm::predict(model, w.observed).poses, model.skeleton);
    std::cout << file.string() << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds) {
  const auto entries = pm::run_gradcheck_suite(seed, seeds);
  bool ok = true;
  for (const auto& e : entries) {
    const bool pass = e.max_relative_error < 1e-4;
    ok = ok && pass;
    std::printf("%-18s max rel err %.3e over %zu seeds  %s\n", e.op.c_str(),
                e.max_relative_error, e.configurations, pass ? "ok" : "FAIL");
  }
  return ok ? 0 : kExitRuntime;
}

int cmd_ablate(const std::vector<int>& horizons, RunFlags f) {
  const pm::Skeleton s = skeleton_of(f);
  const pm::ModelConfig base = [&] {
    RunFlags full = f;
    full.no_explicit = full.no_implicit = full.no_displacement = false;
    return model_config(full);
  }();
  const pm::TrainConfig tc = train_config(f);
  std::vector<pm::AblationSpec> specs;
  if (f.no_explicit || f.no_implicit || f.no_displacement) {
    const pm::AblationSpec only{!f.no_explicit, !f.no_implicit, !f.no_displacement};
    only.validate();
    specs = {pm::AblationSpec{}, only};
  } else {
    specs = pm::single_ablations();
  }
  base.validate();
  tc.validate();
  if (f.data.empty()) throw pm::UsageError("ablate needs --data");
  const auto train_set = windows_from(f.data, s, base.observed, base.horizon, f.stride);
  const auto test_set = f.test.empty()
                            ? train_set
                            : windows_from(f.test, s, base.observed, base.horizon, f.stride);
  const std::vector<int> hs = horizons_for(horizons, f.fps, base.horizon);
  const auto results = pm::ablate(specs, s, train_set, test_set, base, tc, f.fps, f.seed, hs);
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& r : results) {
    std::cout << pm::format_table(r.table, r.spec.name()) << "\n";
    doc[r.spec.name()] = pm::to_json(r.table);
  }
  const fs::path dir = out_dir(f.out);
  write_text(dir / "ablation.json", doc.dump(1) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skeleton motion prediction in phase space"};
  app.require_subcommand(1);

  std::string synth_kind, synth_skeleton, synth_out = ".";
  std::size_t synth_frames = 100, synth_count = 1;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write synthetic motion CSVs");
  synth->add_option("--kind", synth_kind, "constant_velocity | sinusoid_limbs | circle")
      ->required();
  synth->add_option("--frames", synth_frames);
  synth->add_option("--count", synth_count, "number of sequences");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--skeleton", synth_skeleton)->check(ExistingPath());
  synth->add_option("--out", synth_out);

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "train a model, write checkpoint and loss log");
  auto train_opts = add_run_flags(*train, train_flags, true, true);
  train_opts["data"] = train->add_option("--data", train_flags.data, "training CSV directory");
  train_opts["val"] = train->add_option("--val", train_flags.val, "validation CSV directory");

  RunFlags eval_flags;
  std::string eval_checkpoint, eval_baseline, eval_predictions;
  std::vector<int> eval_horizons;
  auto* eval = app.add_subcommand("eval", "MPJPE per horizon for a checkpoint or baseline");
  auto eval_opts = add_run_flags(*eval, eval_flags, false, false);
  eval_opts["data"] = eval->add_option("--data", eval_flags.data, "ground-truth CSV directory");
  eval->add_option("--checkpoint", eval_checkpoint);
  eval->add_option("--baseline", eval_baseline, "zero_velocity | constant_velocity");
  eval->add_option("--predictions", eval_predictions, "score CSVs written by predict");
  eval->add_option("--horizons", eval_horizons, "milliseconds")->delimiter(',');
  eval_opts["observed"] = eval->add_option("--observed", eval_flags.observed);
  eval_opts["horizon"] = eval->add_option("--horizon", eval_flags.horizon);

  RunFlags predict_flags;
  std::string predict_checkpoint;
  auto* predict = app.add_subcommand("predict", "write predicted future frames per window");
  auto predict_opts = add_run_flags(*predict, predict_flags, false, false);
  predict_opts["data"] = predict->add_option("--data", predict_flags.data);
  predict->add_option("--checkpoint", predict_checkpoint);

  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 20;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--seeds", gc_seeds, "random configurations per op");

  RunFlags ablate_flags;
  std::vector<int> ablate_horizons;
  auto* ablate = app.add_subcommand("ablate", "train and compare pathway ablations");
  auto ablate_opts = add_run_flags(*ablate, ablate_flags, true, true);
  ablate_opts["data"] = ablate->add_option("--data", ablate_flags.data);
  ablate_opts["test"] = ablate->add_option("--test", ablate_flags.test);
  ablate->add_option("--horizons", ablate_horizons, "milliseconds")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) {
      return cmd_synth(synth_kind, synth_frames, synth_count, synth_seed, synth_skeleton, synth_out);
    }
    if (*train) {
      apply_config(train_flags, train_opts);
      return cmd_train(train_flags);
    }
    if (*eval) {
      apply_config(eval_flags, eval_opts);
      return cmd_eval(eval_checkpoint, eval_baseline, eval_predictions, eval_horizons, eval_flags);
    }
    if (*predict) {
      apply_config(predict_flags, predict_opts);
      return cmd_predict(predict_checkpoint, predict_flags);
    }
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_seeds);
    if (*ablate) {
      apply_config(ablate_flags, ablate_opts);
      return cmd_ablate(ablate_horizons, ablate_flags);
    }
  } catch (const pm::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const pm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
