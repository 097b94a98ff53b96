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

// Acceptance run: criteria 1-10 at desk scale, five seeds where asked.
// Usage: acceptance [criterion ...]   (default: all)
// Detail goes to stdout as it is produced; the PASS/FAIL block comes last.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hdyn/gradcheck_suite.hpp"
#include "hdyn/harness.hpp"
#include "hdyn/oracle.hpp"

namespace hdyn {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

constexpr std::size_t kSeeds = 5;

// ---------------------------------------------------------------------------
// 1-4: property suites

Verdict gradient_integrity() {
  const auto t0 = Clock::now();
  const auto cases = run_gradcheck_suite(20);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool ok = true;
  for (const auto& c : cases) {
    ok = ok && c.pass();
    if (!(c.result.max_rel_error <= worst)) {
      worst = c.result.max_rel_error;
      worst_name = c.name;
    }
  }
  return {ok && secs < 60.0, std::to_string(cases.size()) + " checks, worst " + worst_name + " " +
                                 fmt("%.2e", worst) + ", " + fmt("%.1f s", secs)};
}

Verdict structural_exactness() {
  bool ok = param_count(push_target_spec()) == 2696 && param_count(loco_target_spec()) == 17282;
  std::size_t configs = 0;
  for (const std::string env : {"push", "slope", "pier"}) {
    for (const std::string scale : {"false", "true"}) {
      for (const std::string obst : {"false", "true"}) {
        if (env != "push" && obst == "true") continue;
        ConfigMap m;
        m.set("env", env);
        m.set("paper_scale", scale);
        m.set("obstacles", obst);
        const ExperimentConfig cfg = resolve(m);
        Rng rng(0);
        HyperDynamicsModel hd(cfg.model, Normalizers::identity(cfg.model.task), rng);
        const HyperSpec& hs = hd.hyper_spec();
        const std::vector<double> z(hs.z_dim(), 0.0);
        const std::size_t got = hd.weights_for(z).size();
        ok = ok && got == param_count(hs.target) && hs.net.layer_sizes.back() == got;
        ++configs;
      }
    }
  }
  return {ok, std::to_string(configs) + " configs; full-size targets 2696 and 17282"};
}

Verdict oracle_equivalence() {
  Rng rng(1);
  std::size_t n = 0;
  bool ok = true;
  for (int i = 0; i < 100; ++i) {
    const PushSystem sys = sample_push_system(rng, i % 2 == 1);
    const PushTrajectory tr = collect_push_trajectory(sys, rng, 10);
    ok = ok && unroll_push(EnvPushPredictor(sys), tr.states[0], tr.actions) == tr.states;
    ++n;
  }
  for (LocoVariant v : {LocoVariant::kSlope, LocoVariant::kPier}) {
    for (int i = 0; i < 20; ++i) {
      const LocoSystem sys = sample_loco_system(rng, v, i % 2 == 1);
      const auto tr =
          collect_loco_rollout(sys, [&](const LocoTrajectory&) { return rng.uniform(-1, 1); }, 200);
      ok = ok && unroll_loco(EnvLocoPredictor(sys), tr.states[0], tr.actions) == tr.states;
      ++n;
    }
  }
  // random_shooting against brute-force re-evaluation.
  std::size_t plans = 0;
  for (int i = 0; i < 40; ++i) {
    const PushSystem sys = sample_push_system(rng, false);
    const auto ti = sample_push_task(sys, i % 2 == 1, rng);
    const MpcConfig cfg = MpcConfig::push(i % 2 == 1);
    const EnvPushPredictor oracle(sys);
    const auto plan = random_shooting<PushAction>(
        cfg,
        [&](std::size_t k, Rng& r) {
          return evaluate_push_candidates(oracle, sys, ti.start, ti.task, cfg.horizon, k, r);
        },
        rng);
    std::size_t best = 0;
    for (std::size_t k = 0; k < plan.evaluated.size(); ++k) {
      const auto& c = plan.evaluated[k];
      const double cost =
          push_cost(rollout_push(sys, ti.start, c.actions).states, ti.task, sys.bounding_radius);
      ok = ok && cost == c.cost;
      if (cost < plan.evaluated[best].cost) best = k;
    }
    ok = ok && best == plan.index && plan.actions == plan.evaluated[best].actions;
    ++plans;
  }
  return {ok, std::to_string(n) + " rollouts bitwise, " + std::to_string(plans) +
                  " plans re-checked"};
}

Verdict physics_invariants() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::size_t checks = 0;
  Rng rng(2);
  std::string bad;
  auto group = [&](const char* name, bool was) {
    if (was && !ok) bad += std::string(" ") + name;
  };
  bool before = true;
  // Zero action without contact: the object stays put, bitwise.
  for (int i = 0; i < 200; ++i) {
    const PushSystem sys = sample_push_system(rng, i % 2 == 1);
    PushState s = sample_push_start(sys, rng);
    s.e = {0.01, 0.01};
    if ((s.p - s.e).norm() < sys.bounding_radius + 0.02) continue;
    for (int t = 0; t < 10; ++t) ok = ok && push_step(sys, s, {{0.0, 0.0}}) == s;
    ++checks;
  }
  group("rest", before);
  before = ok;
  // Friction dissipates to exact rest.
  for (int i = 0; i < 200; ++i) {
    const PushSystem sys = sample_push_system(rng, i % 2 == 1);
    PushState s;
    s.p = {0.3, 0.3};
    s.v = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    s.omega = rng.uniform(-0.5, 0.5);
    s.e = {0.01, 0.01};
    double ke = s.kinetic_energy(sys);
    bool rest = false;
    for (int t = 0; t < 100 && !rest; ++t) {
      s = push_step(sys, s, {{0.0, 0.0}});
      const double k = s.kinetic_energy(sys);
      ok = ok && k <= ke;
      ke = k;
      rest = k == 0.0;
    }
    ok = ok && rest;
    ++checks;
  }
  group("dissipation", before);
  before = ok;
  // Sliding distance v0^2 / (2 mu g) when the object stops within one step.
  for (int i = 0; i < 200; ++i) {
    const PushSystem sys = sample_push_system(rng, false);
    PushState s;
    s.p = {0.2, 0.3};
    s.e = {0.01, 0.01};
    const double v0 = rng.uniform(0.001, 0.9 * sys.mu * kGravity * kPushDt);
    const double ang = rng.uniform(-M_PI, M_PI);
    s.v = {v0 * std::cos(ang), v0 * std::sin(ang)};
    const PushState n = push_step(sys, s, {{0.0, 0.0}});
    ok = ok && std::abs((n.p - s.p).norm() - v0 * v0 / (2.0 * sys.mu * kGravity)) < 1e-9;
    ++checks;
  }
  group("sliding", before);
  before = ok;
  // A fixed push moves heavier objects less.
  for (int i = 0; i < 50; ++i) {
    double prev = INFINITY;
    const double mu = rng.uniform(0.008, 0.012);
    for (double m : {0.3, 0.45, 0.6, 0.8, 1.0}) {
      const PushSystem sys = make_push_system(0, {ShapeFamily::kRectangle, 10, 10}, m, mu);
      PushState s;
      s.p = {0.3, 0.3};
      s.e = {0.3 - 0.0501, 0.3};
      // The object stops within the step, so the impulse shows up as travel.
      const double travel = push_step(sys, s, {{0.06, 0.0}}).p.x - s.p.x;
      ok = ok && travel > 0.0 && travel < prev;
      prev = travel;
    }
    ++checks;
  }
  group("impulse", before);
  before = ok;
  // Locomotion at rest on flat ground with zero action stays at rest.
  for (double c : {0.1, 0.5, 0.9}) {
    const LocoSystem sys = uniform_loco_system(LocoVariant::kPier, c);
    const auto r = loco_step(sys, {3.0, 0.0}, 0.0);
    ok = ok && r.state.x == 3.0 && r.state.v == 0.0 && r.reward == 0.0;
    ++checks;
  }
  group("loco rest", before);
  const double secs = seconds_since(t0);
  return {ok && secs < 10.0, std::to_string(checks) + " checks, " + fmt("%.2f s", secs) +
                                 (bad.empty() ? "" : ", failed:" + bad)};
}

// ---------------------------------------------------------------------------
// 5-7, 9: pushing, one shared training run per (method, seed)

struct PushRun {
  double seen_t1 = 0, novel_t1 = 0;
  double mpc_success = 0;   // novel, no obstacles
  double sound_rate = 1.0;  // obstacles
  double train_seconds = 0;
};

using PushRuns = std::map<std::string, std::vector<PushRun>>;

double t1_of(const std::vector<MetricsRow>& rows) {
  for (const auto& r : rows) {
    if (r.metric == "pos_err_t1_cm") return r.value;
  }
  throw std::logic_error("pos_err_t1_cm missing");
}

const PushRuns& push_runs(bool need_mpc) {
  static PushRuns runs;
  static bool done = false;
  if (done) return runs;
  done = true;
  const std::vector<std::pair<std::string, std::string>> arms{
      {"hyperdynamics", ""}, {"expert_ens", ""}, {"direct", ""}, {"xyz", ""},
      {"hyperdynamics", "no_decoder"}};
  for (std::size_t seed = 0; seed < kSeeds; ++seed) {
    ConfigMap base;
    base.set("seed", std::to_string(seed));
    const ExperimentConfig data_cfg = resolve(base);
    const PushDataset ds =
        gen_push_dataset(seed, data_cfg.train_trajectories, data_cfg.test_trajectories);
    for (const auto& [method, mode] : arms) {
      ConfigMap m = mode.empty() ? base : ablation_config(base, mode);
      m.set("method", method);
      const ExperimentConfig cfg = resolve(m);
      const auto t0 = Clock::now();
      const Trained t = train_offline(cfg, ds.train);
      PushRun run;
      run.train_seconds = seconds_since(t0);
      const auto bind = model_binder(*t.model);
      run.seen_t1 = t1_of(eval_prediction(bind, ds.seen, method, "seen", seed, 0));
      run.novel_t1 = t1_of(eval_prediction(bind, ds.novel, method, "novel", seed, 0));
      const std::string name = mode.empty() ? method : method + "[" + mode + "]";
      if (need_mpc && mode.empty() && method != "expert_ens") {
        const auto open = eval_push_mpc(bind, cfg.mpc, false, 50, Split::kNovel, method, seed, 0);
        run.mpc_success = open.rows[0].value;
        ConfigMap mo = m;
        mo.set("obstacles", "true");
        const ExperimentConfig ocfg = resolve(mo);
        const auto obst = eval_push_mpc(bind, ocfg.mpc, true, 50, Split::kNovel, method, seed, 0);
        run.sound_rate = obst.rows[2].value;
      }
      std::printf("  push seed %zu %-28s t1 seen %.4f novel %.4f  mpc %.2f sound %.2f  %.0f s\n",
                  seed, name.c_str(), run.seen_t1, run.novel_t1, run.mpc_success, run.sound_rate,
                  run.train_seconds);
      std::fflush(stdout);
      runs[name].push_back(run);
    }
  }
  return runs;
}

template <class F>
double median_over(const std::vector<PushRun>& runs, F f) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(f(r));
  return median(v);
}

Verdict table1_seen(const PushRuns& r) {
  const double hd = median_over(r.at("hyperdynamics"), [](auto& x) { return x.seen_t1; });
  const double ee = median_over(r.at("expert_ens"), [](auto& x) { return x.seen_t1; });
  double secs = 0;
  for (const std::string m : {"hyperdynamics", "expert_ens"}) {
    for (const auto& x : r.at(m)) secs += x.train_seconds;
  }
  return {hd <= 1.25 * ee && secs <= 1800.0,
          "median t1 seen HD " + fmt("%.4f", hd) + " cm vs 1.25 x Expert-Ens " +
              fmt("%.4f", 1.25 * ee) + " cm; training " + fmt("%.0f s", secs)};
}

Verdict table1_novel(const PushRuns& r) {
  auto med = [&](const std::string& m) {
    return median_over(r.at(m), [](auto& x) { return x.novel_t1; });
  };
  const double hd = med("hyperdynamics"), di = med("direct"), xy = med("xyz");
  return {hd < di && hd < xy, "median t1 novel HD " + fmt("%.4f", hd) + ", Direct " +
                                  fmt("%.4f", di) + ", XYZ " + fmt("%.4f", xy) + " cm"};
}

Verdict table2(const PushRuns& r) {
  auto rate = [&](const std::string& m) {
    double s = 0;
    for (const auto& x : r.at(m)) s += x.mpc_success;
    return s / static_cast<double>(r.at(m).size());
  };
  bool sound = true;
  for (const std::string m : {"hyperdynamics", "direct", "xyz"}) {
    for (const auto& x : r.at(m)) sound = sound && x.sound_rate == 1.0;
  }
  const double hd = rate("hyperdynamics"), di = rate("direct"), xy = rate("xyz");
  return {hd >= di && hd >= xy && sound,
          "novel success HD " + fmt("%.3f", hd) + ", Direct " + fmt("%.3f", di) + ", XYZ " +
              fmt("%.3f", xy) + " (250 trials each); obstacle plans sound: " +
              (sound ? "all" : "NOT all")};
}

Verdict ablation(const PushRuns& r) {
  const double def = median_over(r.at("hyperdynamics"), [](auto& x) { return x.novel_t1; });
  const double nd =
      median_over(r.at("hyperdynamics[no_decoder]"), [](auto& x) { return x.novel_t1; });
  return {nd >= 1.25 * def, "median t1 novel no_decoder " + fmt("%.4f", nd) + " vs default " +
                                fmt("%.4f", def) + " cm (ratio " + fmt("%.3f", nd / def) + ")"};
}

// ---------------------------------------------------------------------------
// 8: locomotion

Verdict table3() {
  bool ok = true;
  std::string detail;
  for (const std::string env : {"slope", "pier"}) {
    const auto t0 = Clock::now();
    std::map<std::string, std::map<Split, std::vector<double>>> pooled;
    for (std::size_t seed = 0; seed < kSeeds; ++seed) {
      for (const std::string method : {"hyperdynamics", "expert_ens"}) {
        ConfigMap m;
        m.set("env", env);
        m.set("method", method);
        m.set("seed", std::to_string(seed));
        const ExperimentConfig cfg = resolve(m);
        const OnPolicyTrained t = train_onpolicy(cfg);
        const Model& model = *t.model;
        for (Split sp : {Split::kSeen, Split::kNovel}) {
          std::vector<double> ret;
          eval_loco([&](const LocoSystem&) { return model_loco_binder(model); }, cfg, sp, method,
                    0, &ret);
          pooled[method][sp].insert(pooled[method][sp].end(), ret.begin(), ret.end());
          std::printf("  %s seed %zu %-14s %-5s iterations %zu mean return %.3f\n", env.c_str(),
                      seed, method.c_str(), split_name(sp).c_str(), t.returns.size(),
                      stats_of(ret).mean);
          std::fflush(stdout);
        }
      }
    }
    const double secs = seconds_since(t0);
    const double hs = median(pooled["hyperdynamics"][Split::kSeen]);
    const double es = median(pooled["expert_ens"][Split::kSeen]);
    const double hn = median(pooled["hyperdynamics"][Split::kNovel]);
    const double en = median(pooled["expert_ens"][Split::kNovel]);
    const bool pass = hs >= 0.9 * es && hn >= en && secs <= 1800.0;
    ok = ok && pass;
    detail += env + ": seen HD " + fmt("%.2f", hs) + " vs 0.9 x EE " + fmt("%.2f", 0.9 * es) +
              ", novel HD " + fmt("%.2f", hn) + " vs EE " + fmt("%.2f", en) + ", " +
              fmt("%.0f s", secs) + (pass ? "" : " [fail]") + "; ";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 10: reproducibility

Verdict reproducibility() {
  bool ok = true;
  // Offline pushing, twice from scratch.
  auto push_csv = [](const std::string& method) {
    ConfigMap m;
    m.set("seed", "3");
    m.set("method", method);
    m.set("train_trajectories", "300");
    m.set("test_trajectories", "40");
    m.set("epochs", "2");
    m.set("expert_epochs", "2");
    const ExperimentConfig cfg = resolve(m);
    const PushDataset ds = gen_push_dataset(cfg.seed, cfg.train_trajectories, cfg.test_trajectories);
    Trained t = train_offline(cfg, ds.train);
    std::vector<MetricsRow> rows = t.history;
    for (Split sp : {Split::kSeen, Split::kNovel}) {
      auto r = eval_prediction(model_binder(*t.model), ds.split(sp), method, split_name(sp),
                               cfg.seed, 0);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    auto mpc = eval_push_mpc(model_binder(*t.model), cfg.mpc, false, 5, Split::kNovel, method,
                             cfg.seed, 0);
    rows.insert(rows.end(), mpc.rows.begin(), mpc.rows.end());
    // Checkpoint round trip: bytes and predictions.
    const std::string bytes = encode_container(model_container(cfg, *t.model, t.step, t.rng));
    const LoadedModel back = model_from_container(decode_container(bytes));
    bool same = encode_container(model_container(back.cfg, *back.model, back.step, back.rng)) ==
                bytes;
    for (const auto& rec : ds.novel) {
      const auto a = model_binder(*t.model)(rec), b = model_binder(*back.model)(rec);
      for (std::size_t k = 0; k < rec.traj.length(); ++k) {
        const auto s = rec.traj.states[k].to_array();
        const double act[2] = {rec.traj.actions[k].delta.x, rec.traj.actions[k].delta.y};
        same = same && a->predict(s, act).vec() == b->predict(s, act).vec();
      }
    }
    return std::make_pair(metrics_csv(rows), same);
  };
  std::size_t runs = 0;
  std::string bad;
  for (const std::string method :
       {"hyperdynamics", "xyz", "direct", "recurrent", "fomaml", "expert_ens"}) {
    const auto a = push_csv(method), b = push_csv(method);
    if (a.first != b.first) bad += " " + method + "(metrics)";
    if (!a.second || !b.second) bad += " " + method + "(checkpoint)";
    runs += 2;
  }
  // On-policy locomotion, twice.
  auto loco_csv = [] {
    ConfigMap m;
    m.set("env", "pier");
    m.set("seed", "4");
    m.set("iterations", "2");
    m.set("rollouts", "2");
    m.set("rollout_steps", "40");
    m.set("epochs", "1");
    m.set("mpc_sequences", "20");
    m.set("mpc_horizon", "5");
    m.set("eval_episodes", "2");
    const ExperimentConfig cfg = resolve(m);
    const OnPolicyTrained t = train_onpolicy(cfg);
    std::vector<MetricsRow> rows = t.history;
    const Model& model = *t.model;
    auto r = eval_loco([&](const LocoSystem&) { return model_loco_binder(model); }, cfg,
                       Split::kNovel, cfg.method, 0);
    rows.insert(rows.end(), r.begin(), r.end());
    return metrics_csv(rows);
  };
  if (loco_csv() != loco_csv()) bad += " loco(metrics)";
  runs += 2;
  ok = bad.empty();
  return {ok, std::to_string(runs) + " runs; " +
                  (ok ? "metrics and checkpoints byte-identical" : "differs:" + bad)};
}

}  // namespace
}  // namespace hdyn

int main(int argc, char** argv) {
  using namespace hdyn;
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  auto on = [&](int c) { return want.empty() || want.count(c) > 0; };

  std::map<int, Verdict> out;
  const char* names[] = {"",
                         "gradient integrity",
                         "structural exactness",
                         "oracle equivalence",
                         "physics invariants",
                         "push prediction, seen systems",
                         "push prediction, novel systems",
                         "push MPC",
                         "locomotion returns",
                         "no-decoder ablation",
                         "reproducibility"};
  auto run = [&](int c, auto&& f) {
    if (!on(c)) return;
    const auto t0 = Clock::now();
    try {
      out[c] = f();
    } catch (const std::exception& e) {
      out[c] = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%d] %s: %s (%.0f s)\n", c, out[c].pass ? "pass" : "fail", out[c].detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };
  run(1, gradient_integrity);
  run(2, structural_exactness);
  run(3, oracle_equivalence);
  run(4, physics_invariants);
  if (on(5) || on(6) || on(7) || on(9)) {
    const PushRuns& r = push_runs(on(7));
    run(5, [&] { return table1_seen(r); });
    run(6, [&] { return table1_novel(r); });
    run(7, [&] { return table2(r); });
    run(9, [&] { return ablation(r); });
  }
  run(8, table3);
  run(10, reproducibility);

  std::printf("\n");
  int failed = 0;
  for (const auto& [c, v] : out) {
    std::printf("%s  criterion %2d  %s\n", v.pass ? "PASS" : "FAIL", c, names[c]);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
