// Copyright 2026 The hdyn Authors
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

// hdyn: data generation, training, evaluation, planning and ablations.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "hdyn/gradcheck_suite.hpp"
#include "hdyn/harness.hpp"

namespace fs = std::filesystem;
using namespace hdyn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by every command that reads a configuration.
struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string method;
  std::int64_t seed = -1;
  std::string out;
  std::size_t jobs = 1;
};

std::string config_key_help() {
  std::string s = "Config keys (defaults):\n";
  for (const auto& k : config_keys()) {
    s += "  " + k.name + " = " + k.default_value + "    " + k.help + "\n";
  }
  return s;
}

void add_config_options(CLI::App* c, Common& o, bool with_method) {
  c->add_option("--config", o.config, "key = value config file");
  c->add_option("--set", o.sets, "override one config key (key=value), repeatable");
  if (with_method) c->add_option("--method", o.method, "method (overrides the config)");
  c->add_option("--seed", o.seed, "seed (overrides the config; HDYN_SEED is the fallback)");
  c->footer(config_key_help());
}

void add_out(CLI::App* c, Common& o) {
  c->add_option("--out", o.out, "output directory; every file is written under it")->required();
}

void add_jobs(CLI::App* c, Common& o) {
  c->add_option("--jobs", o.jobs, "parallel seeds; results are identical for any value")
      ->check(CLI::PositiveNumber);
}

void apply_sets(ConfigMap& m, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    m.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
}

// Layering: defaults < HDYN_SEED < config file < --set < --method/--seed.
ConfigMap build_config(const Common& o) {
  ConfigMap m;
  if (const char* env = std::getenv("HDYN_SEED"); env && *env) m.set("seed", env);
  if (!o.config.empty()) m.load_file(o.config);
  apply_sets(m, o.sets);
  if (!o.method.empty()) m.set("method", o.method);
  if (o.seed >= 0) m.set("seed", std::to_string(o.seed));
  resolve(m);
  return m;
}

fs::path out_dir(const Common& o) {
  fs::create_directories(o.out);
  return fs::path(o.out);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
  if (!f) throw std::runtime_error("write failed: " + p.string());
}

void write_metrics(const fs::path& dir, const std::vector<MetricsRow>& rows) {
  write_text(dir / "metrics.csv", metrics_csv(rows));
  write_text(dir / "summary.json", summary_json(rows).dump(2) + "\n");
}

// Runs f(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <class T, class F>
std::vector<T> run_indexed(std::size_t n, std::size_t jobs, F f) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> err(n);
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> l(mu);
        if (next >= n) return;
        i = next++;
      }
      try {
        out[i] = f(i);
      } catch (...) {
        err[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::min(jobs, n); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : err) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ConfigMap with_seed(ConfigMap m, std::uint64_t seed) {
  m.set("seed", std::to_string(seed));
  return m;
}

PushDataset dataset_for(const ExperimentConfig& cfg, const std::string& data_path) {
  if (!data_path.empty()) return push_dataset_from(load_container(data_path));
  return gen_push_dataset(cfg.seed, cfg.train_trajectories, cfg.test_trajectories);
}

std::vector<Split> parse_splits(const std::string& s) {
  if (s == "both") return {Split::kSeen, Split::kNovel};
  const Split sp = parse_split(s);
  if (sp == Split::kTrain) throw UsageError("--split must be seen, novel or both");
  return {sp};
}

// Model from --ckpt, or the ground-truth environment with --oracle.
struct ModelSource {
  std::string ckpt;
  bool oracle = false;
};

void add_model_source(CLI::App* c, ModelSource& s) {
  c->add_option("--ckpt", s.ckpt, "model checkpoint");
  c->add_flag("--oracle", s.oracle, "use the ground-truth environment instead of a checkpoint");
}

void check_source(const ModelSource& s) {
  if (s.ckpt.empty() == !s.oracle) throw UsageError("exactly one of --ckpt or --oracle is required");
}

// Configuration for evaluating a model: the checkpoint's own snapshot with
// --set and --seed applied on top, or the usual layering for --oracle.
ConfigMap source_config(const Common& o, const ModelSource& src,
                        std::unique_ptr<LoadedModel>& loaded) {
  if (src.oracle) return build_config(o);
  loaded = std::make_unique<LoadedModel>(load_model(src.ckpt));
  ConfigMap m = loaded->cfg.source;
  apply_sets(m, o.sets);
  if (o.seed >= 0) m.set("seed", std::to_string(o.seed));
  resolve(m);
  return m;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& o) {
  const ConfigMap m = build_config(o);
  const ExperimentConfig cfg = resolve(m);
  if (!cfg.is_push()) throw ConfigError("gen-data: locomotion data is collected on-policy by 'loco'");
  const auto dir = out_dir(o);
  const PushDataset ds = gen_push_dataset(cfg.seed, cfg.train_trajectories, cfg.test_trajectories);
  save_container((dir / "dataset.hdyn").string(), push_dataset_container(ds, m.text()));
  write_text(dir / "config.txt", m.text());
  std::printf("wrote %zu/%zu/%zu records to %s\n", ds.train.size(), ds.seen.size(), ds.novel.size(),
              (dir / "dataset.hdyn").c_str());
  return 0;
}

std::vector<MetricsRow> train_push(const ConfigMap& m, const std::string& data, const fs::path& dir) {
  const ExperimentConfig cfg = resolve(m);
  const PushDataset ds = dataset_for(cfg, data);
  const Trained t = train_offline(cfg, ds.train);
  save_model((dir / ("model_seed" + std::to_string(cfg.seed) + ".ckpt")).string(), cfg, *t.model,
             t.step, t.rng);
  auto rows = t.history;
  for (Split sp : {Split::kSeen, Split::kNovel}) {
    const auto r = eval_prediction(model_binder(*t.model), ds.split(sp), cfg.method,
                                   split_name(sp), cfg.seed, static_cast<std::int64_t>(t.step));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

std::vector<MetricsRow> train_loco(const ConfigMap& m, const fs::path& dir) {
  const ExperimentConfig cfg = resolve(m);
  const OnPolicyTrained t = train_onpolicy(cfg);
  save_model((dir / ("model_seed" + std::to_string(cfg.seed) + ".ckpt")).string(), cfg, *t.model,
             t.step, t.rng);
  auto rows = t.history;
  const Model& model = *t.model;
  for (Split sp : {Split::kSeen, Split::kNovel}) {
    const auto r = eval_loco([&](const LocoSystem&) { return model_loco_binder(model); }, cfg, sp,
                             cfg.method, static_cast<std::int64_t>(t.step));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

// Trains `seeds` consecutive seeds from the configured one.
int cmd_train(const Common& o, const std::string& data, bool all_seeds) {
  const ConfigMap m = build_config(o);
  const ExperimentConfig cfg = resolve(m);
  if (!data.empty() && !cfg.is_push()) throw ConfigError("--data applies to pushing only");
  const auto dir = out_dir(o);
  write_text(dir / "config.txt", m.text());
  const std::size_t n = all_seeds ? cfg.seeds : 1;
  const auto per_seed = run_indexed<std::vector<MetricsRow>>(n, o.jobs, [&](std::size_t i) {
    const ConfigMap mi = with_seed(m, cfg.seed + i);
    return cfg.is_push() ? train_push(mi, data, dir) : train_loco(mi, dir);
  });
  std::vector<MetricsRow> rows;
  for (const auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
  write_metrics(dir, rows);
  for (const auto& r : rows) {
    if (r.split != "train" && r.split.rfind("train_", 0) != 0) {
      std::printf("%s seed %llu %s %s = %.4f\n", r.method.c_str(),
                  static_cast<unsigned long long>(r.seed), r.split.c_str(), r.metric.c_str(), r.value);
    }
  }
  return 0;
}

int cmd_eval(const Common& o, const ModelSource& src, const std::string& split,
             const std::string& horizons, const std::string& data) {
  check_source(src);
  std::set<std::string> keep;
  {
    std::stringstream ss(horizons);
    std::string h;
    while (std::getline(ss, h, ',')) {
      h = detail::trim(h);
      if (h != "1" && h != "5") throw UsageError("--horizons accepts 1 and 5");
      keep.insert("_t" + h);
    }
  }
  const auto splits = parse_splits(split);
  std::unique_ptr<LoadedModel> loaded;
  ConfigMap m = source_config(o, src, loaded);
  const ExperimentConfig cfg = resolve(m);
  if (!cfg.is_push()) throw ConfigError("eval: use 'loco --ckpt' for locomotion checkpoints");
  const auto dir = out_dir(o);
  const std::string method = src.oracle ? "oracle" : cfg.method;
  const PushBinder bind = src.oracle ? oracle_binder() : model_binder(*loaded->model);
  const auto step = static_cast<std::int64_t>(loaded ? loaded->step : 0);
  std::vector<MetricsRow> rows;
  for (Split sp : splits) {
    const auto recs = data.empty() ? gen_push_split(cfg.seed, sp, cfg.test_trajectories)
                                   : push_dataset_from(load_container(data)).split(sp);
    for (const auto& r : eval_prediction(bind, recs, method, split_name(sp), cfg.seed, step)) {
      bool ok = false;
      for (const auto& k : keep) ok = ok || r.metric.find(k) != std::string::npos;
      if (ok) rows.push_back(r);
    }
  }
  write_text(dir / "metrics.csv", metrics_csv(rows));
  std::fputs(metrics_csv(rows).c_str(), stdout);
  return 0;
}

int cmd_push_mpc(const Common& o, const ModelSource& src, const std::string& obstacles,
                 std::int64_t trials, const std::string& split) {
  check_source(src);
  if (obstacles != "on" && obstacles != "off") throw UsageError("--obstacles must be on or off");
  const auto splits = parse_splits(split);
  std::unique_ptr<LoadedModel> loaded;
  ConfigMap m = source_config(o, src, loaded);
  m.set("obstacles", obstacles == "on" ? "true" : "false");
  const ExperimentConfig cfg = resolve(m);
  if (!cfg.is_push()) throw ConfigError("push-mpc: pushing checkpoints only");
  const std::size_t n = trials >= 0 ? static_cast<std::size_t>(trials) : cfg.mpc_trials;
  const auto dir = out_dir(o);
  const std::string method = src.oracle ? "oracle" : cfg.method;
  const PushBinder bind = src.oracle ? oracle_binder() : model_binder(*loaded->model);
  std::vector<MetricsRow> rows;
  for (Split sp : splits) {
    const auto r = eval_push_mpc(bind, cfg.mpc, cfg.obstacles, n, sp, method, cfg.seed,
                                 static_cast<std::int64_t>(loaded ? loaded->step : 0));
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  }
  write_text(dir / "metrics.csv", metrics_csv(rows));
  std::fputs(metrics_csv(rows).c_str(), stdout);
  return 0;
}

int cmd_loco(const Common& o, const ModelSource& src) {
  if (src.ckpt.empty() && !src.oracle) return cmd_train(o, "", true);
  check_source(src);
  std::unique_ptr<LoadedModel> loaded;
  ConfigMap m = source_config(o, src, loaded);
  const ExperimentConfig cfg = resolve(m);
  if (cfg.is_push()) throw ConfigError("loco: set env = slope or pier");
  const auto dir = out_dir(o);
  std::vector<MetricsRow> rows;
  for (Split sp : {Split::kSeen, Split::kNovel}) {
    const auto r =
        src.oracle
            ? eval_loco([](const LocoSystem& s) { return oracle_loco_binder(s); }, cfg, sp, "oracle", 0)
            : eval_loco([&](const LocoSystem&) { return model_loco_binder(*loaded->model); }, cfg, sp,
                        cfg.method, static_cast<std::int64_t>(loaded->step));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_text(dir / "metrics.csv", metrics_csv(rows));
  std::fputs(metrics_csv(rows).c_str(), stdout);
  return 0;
}

int cmd_ablate(const Common& o, std::vector<std::string> modes, const std::string& data) {
  const ConfigMap m = build_config(o);
  const ExperimentConfig cfg = resolve(m);
  if (!cfg.is_push()) throw ConfigError("ablate: pushing only");
  if (modes.empty()) modes = ablation_modes();
  for (const auto& mode : modes) resolve(ablation_config(m, mode));
  const auto dir = out_dir(o);
  write_text(dir / "config.txt", m.text());
  const auto per_seed = run_indexed<std::vector<MetricsRow>>(cfg.seeds, o.jobs, [&](std::size_t i) {
    const ConfigMap mi = with_seed(m, cfg.seed + i);
    const PushDataset ds = dataset_for(resolve(mi), data);
    std::vector<MetricsRow> rows;
    for (const auto& mode : modes) {
      const auto r = run_ablation(mi, mode, ds);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    return rows;
  });
  std::vector<MetricsRow> rows;
  for (const auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
  write_metrics(dir, rows);
  for (const auto& mode : modes) {
    const auto v = final_values(rows, "hyperdynamics[" + mode + "]", "novel", "pos_err_t1_cm");
    std::printf("%-32s novel pos_err_t1_cm median %.4f\n", mode.c_str(), stats_of(v).median);
  }
  return 0;
}

int cmd_gradcheck(std::size_t seeds, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite(seeds);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t failed = 0;
  double worst = 0.0;
  std::string csv = "case,seed,max_rel_error,pass\n";
  for (const auto& c : cases) {
    failed += !c.pass();
    worst = std::max(worst, c.result.max_rel_error);
    csv += c.name + "," + std::to_string(c.seed) + "," + format_double(c.result.max_rel_error) + "," +
           (c.pass() ? "1" : "0") + "\n";
    if (!c.pass()) {
      std::printf("FAIL %s seed %llu rel %.3g\n", c.name.c_str(),
                  static_cast<unsigned long long>(c.seed), c.result.max_rel_error);
    }
  }
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "gradcheck.csv", csv);
  }
  std::printf("%zu cases, %zu failed, worst relative error %.3g, tolerance %.0e, %.1f s\n",
              cases.size(), failed, worst, kGradTolerance, secs);
  return failed ? 1 : 0;
}

std::string tsv_field(const std::string& s) {
  std::string o;
  for (char c : s) o += (c == '\t' || c == '\n') ? ' ' : c;
  return o;
}

int cmd_plot_data(const std::string& metrics, const std::string& out) {
  std::ifstream f(metrics, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + metrics);
  std::stringstream ss;
  ss << f.rdbuf();
  const auto rows = parse_metrics_csv(ss.str());
  fs::create_directories(out);
  // Learning curves: every training-split metric as step series.
  std::map<std::string, std::string> curves;
  for (const auto& r : rows) {
    if (r.split.rfind("train", 0) != 0) continue;
    auto& s = curves[r.metric];
    if (s.empty()) s = "method\tsplit\tseed\tstep\tvalue\n";
    s += tsv_field(r.method) + "\t" + tsv_field(r.split) + "\t" + std::to_string(r.seed) + "\t" +
         std::to_string(r.step) + "\t" + format_double(r.value) + "\n";
  }
  for (const auto& [metric, s] : curves) write_text(fs::path(out) / ("curve_" + metric + ".tsv"), s);
  // Tables: final values per (method, split) across seeds.
  const auto j = summary_json(rows);
  std::size_t tables = 0;
  for (const auto& [metric, by_method] : j.items()) {
    bool eval = false;
    std::string s = "method\tsplit\tmean\tstd\tmedian\tn\n";
    for (const auto& [method, by_split] : by_method.items()) {
      for (const auto& [split, st] : by_split.items()) {
        if (split.rfind("train", 0) == 0) continue;
        eval = true;
        s += tsv_field(method) + "\t" + tsv_field(split) + "\t" +
             format_double(st["mean"].get<double>()) + "\t" + format_double(st["std"].get<double>()) +
             "\t" + format_double(st["median"].get<double>()) + "\t" +
             std::to_string(st["n"].get<std::size_t>()) + "\n";
      }
    }
    if (eval) {
      write_text(fs::path(out) / ("table_" + metric + ".tsv"), s);
      ++tables;
    }
  }
  std::printf("%zu curve files, %zu table files in %s\n", curves.size(), tables, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hdyn: dynamics models conditioned on system observations"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common gen, train, eval, mpc, loco, ablate;
  ModelSource eval_src, mpc_src, loco_src;
  std::string train_data, eval_data, ablate_data, eval_split = "both", eval_horizons = "1,5";
  std::string mpc_obstacles = "off", mpc_split = "novel";
  std::int64_t mpc_trials = -1;
  bool train_all = false;
  std::vector<std::string> ablate_modes;
  std::size_t gc_seeds = 20;
  std::string gc_out, plot_metrics, plot_out;

  auto* c_gen = app.add_subcommand("gen-data", "generate a pushing dataset (train, seen, novel)");
  add_config_options(c_gen, gen, false);
  add_out(c_gen, gen);

  auto* c_train = app.add_subcommand("train", "train one method and evaluate it");
  add_config_options(c_train, train, true);
  add_out(c_train, train);
  add_jobs(c_train, train);
  c_train->add_option("--data", train_data, "pushing dataset from gen-data (default: generate)");
  c_train->add_flag("--all-seeds", train_all, "train `seeds` consecutive seeds");

  auto* c_eval = app.add_subcommand("eval", "prediction error of a pushing checkpoint");
  add_config_options(c_eval, eval, false);
  add_model_source(c_eval, eval_src);
  add_out(c_eval, eval);
  c_eval->add_option("--split", eval_split, "seen, novel or both");
  c_eval->add_option("--horizons", eval_horizons, "comma-separated subset of 1,5");
  c_eval->add_option("--data", eval_data, "dataset from gen-data (default: regenerate test splits)");

  auto* c_mpc = app.add_subcommand("push-mpc", "random-shooting pushing episodes");
  add_config_options(c_mpc, mpc, false);
  add_model_source(c_mpc, mpc_src);
  add_out(c_mpc, mpc);
  c_mpc->add_option("--obstacles", mpc_obstacles, "on or off");
  c_mpc->add_option("--trials", mpc_trials, "episodes (-1: mpc_trials from the config)");
  c_mpc->add_option("--split", mpc_split, "seen, novel or both");

  auto* c_loco = app.add_subcommand(
      "loco", "on-policy locomotion: train `seeds` seeds, or evaluate --ckpt / --oracle");
  add_config_options(c_loco, loco, true);
  add_model_source(c_loco, loco_src);
  add_out(c_loco, loco);
  add_jobs(c_loco, loco);

  auto* c_ablate = app.add_subcommand("ablate", "pushing model ablations over `seeds` seeds");
  add_config_options(c_ablate, ablate, false);
  add_out(c_ablate, ablate);
  add_jobs(c_ablate, ablate);
  std::string modes_help = "ablation mode, repeatable (default: all of";
  for (const auto& m : ablation_modes()) modes_help += " " + m;
  c_ablate->add_option("--mode", ablate_modes, modes_help + ")");
  c_ablate->add_option("--data", ablate_data, "dataset from gen-data (default: generate per seed)");

  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of every learned module");
  c_gc->add_option("--seeds", gc_seeds, "random seeds per module")->check(CLI::PositiveNumber);
  c_gc->add_option("--out", gc_out, "optional directory for gradcheck.csv");

  auto* c_plot = app.add_subcommand("plot-data", "TSV series and tables from a metrics CSV");
  c_plot->add_option("--metrics", plot_metrics, "metrics.csv")->required();
  c_plot->add_option("--out", plot_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*c_gen) return cmd_gen_data(gen);
    if (*c_train) {
      if (!train_data.empty() && train_all) throw UsageError("--data and --all-seeds are exclusive");
      return cmd_train(train, train_data, train_all);
    }
    if (*c_eval) return cmd_eval(eval, eval_src, eval_split, eval_horizons, eval_data);
    if (*c_mpc) return cmd_push_mpc(mpc, mpc_src, mpc_obstacles, mpc_trials, mpc_split);
    if (*c_loco) {
      if (!loco.method.empty() && !loco_src.ckpt.empty()) {
        throw UsageError("--method does not apply with --ckpt");
      }
      return cmd_loco(loco, loco_src);
    }
    if (*c_ablate) return cmd_ablate(ablate, ablate_modes, ablate_data);
    if (*c_gc) return cmd_gradcheck(gc_seeds, gc_out);
    if (*c_plot) return cmd_plot_data(plot_metrics, plot_out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
