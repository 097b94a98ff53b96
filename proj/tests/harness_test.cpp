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

#include <gtest/gtest.h>

#include <cmath>

#include "hdyn/harness.hpp"

namespace hdyn {
namespace {

const PushDataset& small_dataset() {
  static const PushDataset ds = gen_push_dataset(0, 120, 30);
  return ds;
}

ConfigMap quick(const std::string& method) {
  ConfigMap m;
  m.set("method", method);
  m.set("epochs", "1");
  m.set("expert_epochs", "1");
  return m;
}

double metric(const std::vector<MetricsRow>& rows, const std::string& name) {
  for (const auto& r : rows) {
    if (r.metric == name) return r.value;
  }
  ADD_FAILURE() << "no metric " << name;
  return NAN;
}

TEST(Dataset, SplitsUseTheRightShapes) {
  const auto& ds = small_dataset();
  for (const auto& r : ds.train) EXPECT_FALSE(is_test_shape(r.system.shape_id));
  for (const auto& r : ds.seen) EXPECT_FALSE(is_test_shape(r.system.shape_id));
  for (const auto& r : ds.novel) EXPECT_TRUE(is_test_shape(r.system.shape_id));
  for (const auto& r : ds.train) {
    EXPECT_TRUE(r.probe.consistent());
    EXPECT_TRUE(r.traj.consistent());
    EXPECT_EQ(r.traj.length(), 5u);
  }
}

TEST(Dataset, DeterministicPerSeedAndIndex) {
  const auto a = gen_push_split(4, Split::kNovel, 6);
  const auto b = gen_push_split(4, Split::kNovel, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].traj.states, b[i].traj.states);
    EXPECT_EQ(a[i].system.mass, b[i].system.mass);
  }
  EXPECT_NE(gen_push_split(5, Split::kNovel, 1)[0].traj.states, a[0].traj.states);
}

TEST(Dataset, ContainerRoundTripIsExact) {
  const auto& ds = small_dataset();
  const std::string a = encode_container(push_dataset_container(ds, "seed = 0\n"));
  const PushDataset back = push_dataset_from(decode_container(a));
  EXPECT_EQ(encode_container(push_dataset_container(back, "seed = 0\n")), a);
  ASSERT_EQ(back.novel.size(), ds.novel.size());
  for (std::size_t i = 0; i < ds.novel.size(); ++i) {
    EXPECT_EQ(back.novel[i].traj.states, ds.novel[i].traj.states);
    EXPECT_EQ(back.novel[i].system.inertia, ds.novel[i].system.inertia);
  }
}

TEST(Dataset, HygieneCheckCatchesHeldOutShapes) {
  const auto& ds = small_dataset();
  EXPECT_NO_THROW(check_push_split_hygiene(push_samples(ds.train)));
  EXPECT_THROW(check_push_split_hygiene(push_samples(ds.novel)), std::logic_error);
}

TEST(EvalPrediction, OracleHasZeroError) {
  const auto rows = eval_prediction(oracle_binder(), small_dataset().novel, "oracle", "novel", 0, 0);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_EQ(r.value, 0.0) << r.metric;
}

TEST(EvalPrediction, ZeroModelErrorIsMeanDisplacement) {
  const auto& recs = small_dataset().seen;
  double d1 = 0.0, d5 = 0.0;
  std::size_t n = 0;
  for (const auto& r : recs) {
    for (const auto& d : r.traj.deltas) {
      d1 += std::hypot(d[0], d[1]);
      ++n;
    }
    d5 += (r.traj.states.back().p - r.traj.states.front().p).norm();
  }
  const auto rows = eval_prediction(zero_binder(), recs, "zero", "seen", 0, 0);
  EXPECT_NEAR(metric(rows, "pos_err_t1_cm"), 100.0 * d1 / static_cast<double>(n), 1e-12);
  EXPECT_NEAR(metric(rows, "pos_err_t5_cm"), 100.0 * d5 / static_cast<double>(recs.size()), 1e-12);
}

TEST(TrainOffline, EveryMethodTrainsAndRoundTripsBitwise) {
  const auto& ds = small_dataset();
  for (const auto& method : method_names()) {
    const ExperimentConfig cfg = resolve(quick(method));
    const Trained t = train_offline(cfg, ds.train);
    EXPECT_GT(t.step, 0u) << method;
    EXPECT_FALSE(t.history.empty());
    for (const auto& h : t.history) EXPECT_TRUE(std::isfinite(h.value));

    const std::string a = encode_container(model_container(cfg, *t.model, t.step, t.rng));
    const LoadedModel l = model_from_container(decode_container(a));
    EXPECT_EQ(encode_container(model_container(l.cfg, *l.model, l.step, l.rng)), a) << method;
    EXPECT_EQ(l.step, t.step);
    EXPECT_EQ(l.rng.state(), t.rng.state());

    // 100 random inputs through the bound predictor, bitwise.
    Rng rng(7);
    const auto& rec = ds.novel[3];
    const auto p1 = t.model->bind(push_system_obs(rec.system, rec.probe));
    const auto p2 = l.model->bind(push_system_obs(rec.system, rec.probe));
    std::vector<double> full(100 * 8), act(100 * 2);
    for (double& v : full) v = rng.uniform(-0.3, 0.3);
    for (double& v : act) v = rng.uniform(-0.06, 0.06);
    EXPECT_EQ(p1->predict(full, act).vec(), p2->predict(full, act).vec()) << method;
  }
}

TEST(TrainOffline, RerunIsBitwiseIdentical) {
  const auto& ds = small_dataset();
  const ExperimentConfig cfg = resolve(quick("hyperdynamics"));
  auto run = [&] {
    const Trained t = train_offline(cfg, ds.train);
    auto rows = t.history;
    const auto e = eval_prediction(model_binder(*t.model), ds.novel, "hd", "novel", cfg.seed, 1);
    rows.insert(rows.end(), e.begin(), e.end());
    return metrics_csv(rows);
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainOffline, TrainingReducesLoss) {
  ConfigMap m = quick("xyz");
  m.set("epochs", "8");
  const Trained t = train_offline(resolve(m), small_dataset().train);
  EXPECT_LT(t.history.back().value, t.history.front().value);
}

TEST(TrainOffline, DivergenceAborts) {
  ConfigMap m = quick("xyz");
  m.set("lr", "1e300");
  m.set("epochs", "3");
  EXPECT_THROW(train_offline(resolve(m), small_dataset().train), TrainingDiverged);
}

TEST(TrainOffline, ExpertsSeeOnlyTheirOwnShape) {
  const Trained t = train_offline(resolve(quick("expert_ens")), small_dataset().train);
  std::size_t per_expert = 0;
  for (const auto& h : t.history) per_expert += h.split.rfind("train_expert_", 0) == 0;
  EXPECT_GT(per_expert, 1u);
}

TEST(Checkpoint, RejectsMismatchedParameters) {
  const ExperimentConfig cfg = resolve(quick("xyz"));
  const Trained t = train_offline(cfg, small_dataset().train);
  Container c = model_container(cfg, *t.model, t.step, t.rng);
  Container extra = c;
  extra.records.emplace_back("param.bogus", Tensor::scalar(1));
  EXPECT_THROW(model_from_container(extra), FormatError);
  Container wrong = c;
  for (auto& [n, v] : wrong.records) {
    if (n.rfind("param.", 0) == 0) {
      v = Tensor::scalar(0);
      break;
    }
  }
  EXPECT_THROW(model_from_container(wrong), FormatError);
}

TEST(PushMpcEval, OracleSucceedsAndTrialsAreShared) {
  const MpcConfig mpc = MpcConfig::push(false);
  const auto a = eval_push_mpc(oracle_binder(), mpc, false, 10, Split::kNovel, "oracle", 3, 0);
  EXPECT_GE(metric(a.rows, "success_rate"), 0.9);
  // The same trials are replayed for another method.
  const auto b = eval_push_mpc(zero_binder(), mpc, false, 10, Split::kNovel, "zero", 3, 0);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.episodes[i].trace.states.front(), b.episodes[i].trace.states.front());
  }
  EXPECT_EQ(push_trial(3, false, Split::kNovel, 4).task.task.goal,
            push_trial(3, false, Split::kNovel, 4).task.task.goal);
}

TEST(Loco, RollingMeanEarlyStop) {
  EXPECT_FALSE(rolling_mean_decreased({1, 2, 3}, 5));
  EXPECT_FALSE(rolling_mean_decreased({1, 2, 3, 4, 5, 6}, 5));
  EXPECT_TRUE(rolling_mean_decreased({1, 2, 3, 4, 5, 0}, 5));
  EXPECT_FALSE(rolling_mean_decreased({1, 1}, 1));
  EXPECT_TRUE(rolling_mean_decreased({1, 0.5}, 1));
}

TEST(Loco, BufferCapDropsOldest) {
  std::deque<Sample> buf;
  for (int i = 0; i < 4; ++i) {
    std::vector<Sample> add(3);
    for (int k = 0; k < 3; ++k) add[k].action = {static_cast<double>(3 * i + k)};
    append_capped(buf, std::move(add), 5);
    EXPECT_LE(buf.size(), 5u);
  }
  EXPECT_EQ(buf.front().action[0], 7.0);
  EXPECT_EQ(buf.back().action[0], 11.0);
}

TEST(Loco, OnPolicyTrainingRespectsCapAndIsReproducible) {
  ConfigMap m;
  m.set("env", "pier");
  m.set("iterations", "3");
  m.set("rollouts", "2");
  m.set("rollout_steps", "60");
  m.set("epochs", "2");
  m.set("buffer_cap", "150");
  m.set("mpc_sequences", "20");
  m.set("mpc_horizon", "4");
  m.set("eval_episodes", "2");
  for (const std::string method : {"hyperdynamics", "expert_ens"}) {
    m.set("method", method);
    const ExperimentConfig cfg = resolve(m);
    auto run = [&] {
      const OnPolicyTrained t = train_onpolicy(cfg);
      EXPECT_LE(t.max_buffer, 150u);
      EXPECT_EQ(t.returns.size(), 3u);
      auto rows = t.history;
      const Model& mm = *t.model;
      const auto e = eval_loco([&](const LocoSystem&) { return model_loco_binder(mm); }, cfg,
                               Split::kNovel, method, 0);
      rows.insert(rows.end(), e.begin(), e.end());
      return metrics_csv(rows);
    };
    EXPECT_EQ(run(), run()) << method;
  }
}

TEST(Loco, TrainingWorldsComeFromTheTrainingRange) {
  ConfigMap m;
  m.set("env", "slope");
  for (const std::string method : {"direct", "expert_ens"}) {
    m.set("method", method);
    for (const auto& w : loco_training_worlds(resolve(m), 2)) {
      EXPECT_NO_THROW(check_loco_split_hygiene(w.system));
    }
  }
  Rng rng(1);
  EXPECT_THROW(check_loco_split_hygiene(sample_loco_system(rng, LocoVariant::kSlope, true)),
               std::logic_error);
}

TEST(Loco, EvalWithOracleIsDeterministic) {
  ConfigMap m;
  m.set("env", "slope");
  m.set("eval_episodes", "2");
  m.set("rollout_steps", "50");
  const ExperimentConfig cfg = resolve(m);
  std::vector<double> r1, r2;
  eval_loco([](const LocoSystem& s) { return oracle_loco_binder(s); }, cfg, Split::kSeen, "o", 0,
            &r1);
  eval_loco([](const LocoSystem& s) { return oracle_loco_binder(s); }, cfg, Split::kSeen, "o", 0,
            &r2);
  EXPECT_EQ(r1, r2);
  EXPECT_GT(r1[0], 0.0);
}

TEST(Ablation, ModesMapToConfig) {
  const ConfigMap base;
  EXPECT_EQ(ablation_config(base, "no_decoder").get("no_decoder"), "true");
  EXPECT_EQ(ablation_config(base, "canonical_shape").get("canonical_shape"), "true");
  EXPECT_EQ(ablation_config(base, "z_int_dim=4").get("z_int_dim"), "4");
  EXPECT_EQ(ablation_config(base, "z_vis_dim=32").get("z_vis_dim"), "32");
  EXPECT_THROW(ablation_config(base, "lr=1"), ConfigError);
  EXPECT_THROW(ablation_config(base, "nothing"), ConfigError);
  for (const auto& mode : ablation_modes()) EXPECT_NO_THROW(resolve(ablation_config(base, mode)));
}

TEST(Ablation, RunsOnSharedData) {
  ConfigMap m = quick("hyperdynamics");
  const auto rows = run_ablation(m, "canonical_shape", small_dataset());
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].method, "hyperdynamics[canonical_shape]");
}

}  // namespace
}  // namespace hdyn
