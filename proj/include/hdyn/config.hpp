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

// Experiment configuration: a flat key=value file with `#` comments.
//
// Every key has a default. A value of "auto" means "depends on env" and is
// replaced by resolve(); `paper_scale = true` swaps the desk-scale automatic
// values for the large-scale ones.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdyn/baselines.hpp"
#include "hdyn/planner.hpp"

namespace hdyn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> k{
      {"env", "push", "push | slope | pier"},
      {"method", "hyperdynamics", "hyperdynamics | xyz | direct | recurrent | fomaml | expert_ens"},
      {"seed", "0", "master seed"},
      {"seeds", "5", "number of seeds for multi-seed commands"},
      {"paper_scale", "false", "use large-scale automatic values"},
      // data
      {"train_trajectories", "auto", "pushing training trajectories (5000; 50000 at paper scale)"},
      {"test_trajectories", "auto", "pushing trajectories per test split (200; 1000)"},
      // optimization
      {"epochs", "auto", "pushing epochs (6) / locomotion epochs per iteration (10; 100)"},
      {"expert_epochs", "auto", "epochs per expert-ensemble member (50 pushing; = epochs otherwise)"},
      {"batch_size", "auto", "transitions per update (8 pushing, 128 locomotion)"},
      {"lr", "0.001", "Adam learning rate"},
      {"objective", "mse", "mse | euclid"},
      // architecture
      {"target_hidden", "auto", "expert hidden sizes (32,32,32 pushing; 32,32 or 128,128 locomotion)"},
      {"int_hidden", "auto", "interaction encoder hidden sizes (8 pushing; 32,32 or 128,128)"},
      {"hyper_hidden", "16", "hypernetwork hidden size"},
      {"z_int_dim", "2", "interaction code size"},
      {"z_vis_dim", "8", "shape code size"},
      {"decoder_hidden", "64", "shape decoder hidden size"},
      {"no_decoder", "false", "drop the shape reconstruction loss"},
      {"canonical_shape", "false", "encode the canonical grid and give theta to the expert"},
      {"aux_weight", "0.1", "weight of the reconstruction loss"},
      {"shape_batch", "8", "shape-only grids paired with each update"},
      {"gru_hidden", "32", "recurrent baseline hidden size"},
      {"inner_lr", "0.01", "fomaml inner learning rate"},
      {"inner_steps", "5", "fomaml inner steps"},
      // planning
      {"obstacles", "false", "pushing MPC with two obstacles"},
      {"mpc_sequences", "auto", "random-shooting samples (30 pushing; 100 or 500 locomotion)"},
      {"mpc_horizon", "auto", "planning horizon (1, 10 with obstacles; 10 or 20 locomotion)"},
      {"mpc_trials", "50", "pushing MPC episodes per evaluation"},
      // locomotion
      {"iterations", "auto", "on-policy iterations (12; 150)"},
      {"rollouts", "auto", "rollouts per iteration (4; 10)"},
      {"rollout_steps", "auto", "steps per rollout (200; 500)"},
      {"buffer_cap", "auto", "transition buffer cap (10000; 50000)"},
      {"early_stop", "true", "stop when the rolling mean return decreases"},
      {"early_stop_window", "5", "rolling window for early stopping"},
      {"expert_params", "auto", "terrain value of each locomotion expert world"},
      {"eval_episodes", "5", "locomotion evaluation episodes per split"},
  };
  return k;
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool is_known_key(const std::string& k) {
  for (const auto& c : config_keys()) {
    if (c.name == k) return true;
  }
  return false;
}

}  // namespace detail

// Raw key/value store in declaration order.
class ConfigMap {
 public:
  ConfigMap() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  void set(const std::string& key, const std::string& value) {
    if (!detail::is_known_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }
  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  void parse(const std::string& text, const std::string& source = "config") {
    std::istringstream is(text);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value");
      }
      const std::string key = detail::trim(line.substr(0, eq));
      try {
        set(key, detail::trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    parse(ss.str(), path);
  }

  // Canonical text: every key in declaration order.
  std::string text() const {
    std::string out;
    for (const auto& k : config_keys()) out += k.name + " = " + values_.at(k.name) + "\n";
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

// Typed, fully resolved configuration.
struct ExperimentConfig {
  std::string env = "push";
  std::string method = "hyperdynamics";
  std::uint64_t seed = 0;
  std::size_t seeds = 5;
  bool paper_scale = false;

  std::size_t train_trajectories = 0;
  std::size_t test_trajectories = 0;
  std::size_t epochs = 0;
  std::size_t expert_epochs = 0;
  std::size_t batch_size = 0;
  double lr = 1e-3;
  std::size_t shape_batch = 8;

  ModelConfig model;
  MpcConfig mpc;
  bool obstacles = false;
  std::size_t mpc_trials = 50;

  std::size_t iterations = 0;
  std::size_t rollouts = 0;
  std::size_t rollout_steps = 0;
  std::size_t buffer_cap = 0;
  bool early_stop = true;
  std::size_t early_stop_window = 5;
  std::size_t eval_episodes = 5;

  ConfigMap source;  // values as given, before resolution

  bool is_push() const { return env == "push"; }
  LocoVariant variant() const { return env == "pier" ? LocoVariant::kPier : LocoVariant::kSlope; }
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

}  // namespace detail

// Validates and resolves every key.
inline ExperimentConfig resolve(const ConfigMap& m) {
  using namespace detail;
  ExperimentConfig c;
  c.source = m;
  c.env = m.get("env");
  if (c.env != "push" && c.env != "slope" && c.env != "pier") {
    throw ConfigError("env: expected push, slope or pier, got '" + c.env + "'");
  }
  c.method = m.get("method");
  bool known = false;
  for (const auto& n : method_names()) known = known || n == c.method;
  if (!known) throw ConfigError("method: unknown method '" + c.method + "'");
  c.seed = parse_size("seed", m.get("seed"));
  c.seeds = parse_size("seeds", m.get("seeds"));
  c.paper_scale = parse_bool("paper_scale", m.get("paper_scale"));
  const bool push = c.is_push();
  const bool big = c.paper_scale;

  auto size_or = [&](const std::string& key, std::size_t dflt) {
    const std::string& v = m.get(key);
    return v == "auto" ? dflt : parse_size(key, v);
  };
  auto sizes_or = [&](const std::string& key, std::vector<std::size_t> dflt) {
    const std::string& v = m.get(key);
    return v == "auto" ? dflt : parse_sizes(key, v);
  };

  c.train_trajectories = size_or("train_trajectories", big ? 50000 : 5000);
  c.test_trajectories = size_or("test_trajectories", big ? 1000 : 200);
  c.epochs = size_or("epochs", push ? (big ? 50 : 6) : (big ? 100 : 10));
  c.expert_epochs = size_or("expert_epochs", push ? (big ? 200 : 50) : c.epochs);
  c.batch_size = size_or("batch_size", push ? 8 : 128);
  c.lr = parse_double("lr", m.get("lr"));
  c.shape_batch = parse_size("shape_batch", m.get("shape_batch"));

  ModelConfig& mc = c.model;
  mc.task = push ? TaskKind::kPush : TaskKind::kLoco;
  const std::vector<std::size_t> loco_hidden =
      big ? std::vector<std::size_t>{128, 128} : std::vector<std::size_t>{32, 32};
  mc.target_hidden = sizes_or("target_hidden", push ? std::vector<std::size_t>{32, 32, 32} : loco_hidden);
  mc.int_hidden = sizes_or("int_hidden", push ? std::vector<std::size_t>{8} : loco_hidden);
  mc.hyper_hidden = parse_size("hyper_hidden", m.get("hyper_hidden"));
  mc.z_int = parse_size("z_int_dim", m.get("z_int_dim"));
  mc.z_vis = parse_size("z_vis_dim", m.get("z_vis_dim"));
  mc.decoder_hidden = parse_size("decoder_hidden", m.get("decoder_hidden"));
  mc.use_decoder = !parse_bool("no_decoder", m.get("no_decoder"));
  mc.canonical_shape = parse_bool("canonical_shape", m.get("canonical_shape"));
  mc.aux_weight = parse_double("aux_weight", m.get("aux_weight"));
  const std::string obj = m.get("objective");
  if (obj != "mse" && obj != "euclid") throw ConfigError("objective: expected mse or euclid");
  mc.objective = obj == "mse" ? Objective::kMse : Objective::kEuclid;
  mc.gru_hidden = parse_size("gru_hidden", m.get("gru_hidden"));
  mc.inner_lr = parse_double("inner_lr", m.get("inner_lr"));
  mc.inner_steps = parse_size("inner_steps", m.get("inner_steps"));
  if (push) {
    for (const auto& s : train_shapes()) mc.expert_ids.push_back(s.id);
  } else {
    const std::string& v = m.get("expert_params");
    if (v == "auto") {
      mc.expert_params = c.variant() == LocoVariant::kSlope
                             ? std::vector<double>{0.5, 1.25, 2.0, 2.75, 3.5}
                             : std::vector<double>{0.2, 0.35, 0.5, 0.65, 0.8};
    } else {
      mc.expert_params = parse_doubles("expert_params", v);
    }
  }

  c.obstacles = parse_bool("obstacles", m.get("obstacles"));
  c.mpc.n_sequences = size_or("mpc_sequences", push ? 30 : (big ? 500 : 100));
  c.mpc.horizon = size_or("mpc_horizon", push ? (c.obstacles ? 10 : 1) : (big ? 20 : 10));
  c.mpc_trials = parse_size("mpc_trials", m.get("mpc_trials"));

  c.iterations = size_or("iterations", big ? 150 : 12);
  c.rollouts = size_or("rollouts", big ? 10 : 4);
  c.rollout_steps = size_or("rollout_steps", big ? 500 : 200);
  c.buffer_cap = size_or("buffer_cap", big ? 50000 : 10000);
  c.early_stop = parse_bool("early_stop", m.get("early_stop"));
  c.early_stop_window = parse_size("early_stop_window", m.get("early_stop_window"));
  c.eval_episodes = parse_size("eval_episodes", m.get("eval_episodes"));

  auto positive = [](const std::string& key, double v) {
    if (!(v > 0)) throw ConfigError(key + ": must be positive");
  };
  positive("seeds", static_cast<double>(c.seeds));
  positive("train_trajectories", static_cast<double>(c.train_trajectories));
  positive("test_trajectories", static_cast<double>(c.test_trajectories));
  positive("batch_size", static_cast<double>(c.batch_size));
  positive("lr", c.lr);
  positive("hyper_hidden", static_cast<double>(mc.hyper_hidden));
  positive("z_int_dim", static_cast<double>(mc.z_int));
  positive("z_vis_dim", static_cast<double>(mc.z_vis));
  positive("iterations", static_cast<double>(c.iterations));
  positive("rollouts", static_cast<double>(c.rollouts));
  positive("rollout_steps", static_cast<double>(c.rollout_steps));
  positive("buffer_cap", static_cast<double>(c.buffer_cap));
  positive("early_stop_window", static_cast<double>(c.early_stop_window));
  for (std::size_t h : mc.target_hidden) positive("target_hidden", static_cast<double>(h));
  for (std::size_t h : mc.int_hidden) positive("int_hidden", static_cast<double>(h));
  if (mc.aux_weight < 0) throw ConfigError("aux_weight: must be >= 0");
  if (mc.inner_lr < 0) throw ConfigError("inner_lr: must be >= 0");
  if (!push && c.method == "expert_ens" && mc.expert_params.empty()) {
    throw ConfigError("expert_params: need at least one value");
  }
  try {
    c.mpc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline ExperimentConfig resolve_text(const std::string& text) {
  ConfigMap m;
  m.parse(text);
  return resolve(m);
}

}  // namespace hdyn
