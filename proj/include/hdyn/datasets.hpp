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

// Pushing datasets. Each record is one system with two independent 5-step
// trajectories from fresh starts: the probe (what the model may look at) and
// the target trajectory (what it must predict).
//
// Splits: "train" and "seen" draw training shapes with fresh mass and
// friction; "novel" draws held-out shapes.

#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdyn/checkpoint.hpp"
#include "hdyn/features.hpp"
#include "hdyn/trajectory.hpp"

namespace hdyn {

enum class Split { kTrain, kSeen, kNovel };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kSeen: return "seen";
    case Split::kNovel: return "novel";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "seen") return Split::kSeen;
  if (s == "novel") return Split::kNovel;
  throw std::invalid_argument("unknown split '" + s + "' (train, seen, novel)");
}

// Stream ids for Rng(seed, {stream, ...}).
enum Stream : std::uint64_t {
  kStreamData = 1,
  kStreamInit = 2,
  kStreamTrain = 3,
  kStreamMpc = 4,
  kStreamLoco = 5,
  kStreamEval = 6,
};

inline const LibraryShape& library_shape(int id) {
  for (const auto& s : train_shapes()) {
    if (s.id == id) return s;
  }
  for (const auto& s : test_shapes()) {
    if (s.id == id) return s;
  }
  throw std::invalid_argument("no library shape with id " + std::to_string(id));
}

inline bool is_test_shape(int id) {
  for (const auto& s : test_shapes()) {
    if (s.id == id) return true;
  }
  return false;
}

struct PushRecord {
  PushSystem system;
  PushTrajectory probe;
  PushTrajectory traj;
};

inline PushRecord sample_push_record(Rng& rng, bool test_shapes_only) {
  PushRecord r;
  r.system = sample_push_system(rng, test_shapes_only);
  r.probe = collect_push_trajectory(r.system, rng, 5);
  r.traj = collect_push_trajectory(r.system, rng, 5);
  return r;
}

inline std::vector<PushRecord> gen_push_split(std::uint64_t seed, Split split, std::size_t n) {
  std::vector<PushRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, {kStreamData, static_cast<std::uint64_t>(split), i});
    out.push_back(sample_push_record(rng, split == Split::kNovel));
  }
  return out;
}

struct PushDataset {
  std::vector<PushRecord> train, seen, novel;

  const std::vector<PushRecord>& split(Split s) const {
    return s == Split::kTrain ? train : s == Split::kSeen ? seen : novel;
  }
};

inline PushDataset gen_push_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test) {
  return {gen_push_split(seed, Split::kTrain, n_train), gen_push_split(seed, Split::kSeen, n_test),
          gen_push_split(seed, Split::kNovel, n_test)};
}

inline std::shared_ptr<const SystemObs> record_obs(const PushRecord& r) {
  return std::make_shared<const SystemObs>(push_system_obs(r.system, r.probe));
}

inline std::vector<Sample> push_samples(const std::vector<PushRecord>& records) {
  std::vector<Sample> out;
  out.reserve(records.size() * 5);
  for (const auto& r : records) append_push_samples(record_obs(r), r.traj, out);
  return out;
}

// Throws if any sample comes from a held-out shape.
inline void check_push_split_hygiene(const std::vector<Sample>& train) {
  for (const auto& s : train) {
    if (is_test_shape(s.obs->system_id)) {
      throw std::logic_error("split hygiene: held-out shape " + std::to_string(s.obs->system_id) +
                             " in training data");
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization: per split, [n, 3] systems (shape id, mass, mu) and, for the
// probe and the target trajectory, [n, 8] start states, [n, 5, 2] actions and
// [n, 5, 8] deltas. States are rebuilt by composition, so the trajectory
// invariant holds exactly after loading.

namespace detail {

inline void put_trajectories(Container& c, const std::string& prefix,
                             const std::vector<PushRecord>& rs, bool probe) {
  const std::size_t n = rs.size();
  Tensor s0 = Tensor::zeros({n, 8}), a = Tensor::zeros({n, 5, 2}), d = Tensor::zeros({n, 5, 8});
  for (std::size_t i = 0; i < n; ++i) {
    const PushTrajectory& tr = probe ? rs[i].probe : rs[i].traj;
    const auto s = tr.states[0].to_array();
    std::copy(s.begin(), s.end(), s0.data().begin() + static_cast<std::ptrdiff_t>(i * 8));
    for (std::size_t t = 0; t < 5; ++t) {
      a.data()[i * 10 + 2 * t] = tr.actions[t].delta.x;
      a.data()[i * 10 + 2 * t + 1] = tr.actions[t].delta.y;
      std::copy(tr.deltas[t].begin(), tr.deltas[t].end(),
                d.data().begin() + static_cast<std::ptrdiff_t>(i * 40 + t * 8));
    }
  }
  const std::string p = prefix + (probe ? ".probe" : ".traj");
  c.records.emplace_back(p + ".start", std::move(s0));
  c.records.emplace_back(p + ".actions", std::move(a));
  c.records.emplace_back(p + ".deltas", std::move(d));
}

inline PushTrajectory get_trajectory(const Container& c, const std::string& p, std::size_t i) {
  const Tensor& s0 = c.at(p + ".start");
  const Tensor& a = c.at(p + ".actions");
  const Tensor& d = c.at(p + ".deltas");
  PushTrajectory tr;
  std::array<double, 8> s{};
  std::copy_n(s0.data().begin() + static_cast<std::ptrdiff_t>(i * 8), 8, s.begin());
  tr.states.push_back(PushState::from_array(s));
  for (std::size_t t = 0; t < 5; ++t) {
    PushDelta dl{};
    std::copy_n(d.data().begin() + static_cast<std::ptrdiff_t>(i * 40 + t * 8), 8, dl.begin());
    tr.push({{a.data()[i * 10 + 2 * t], a.data()[i * 10 + 2 * t + 1]}}, dl);
  }
  return tr;
}

}  // namespace detail

inline Container push_dataset_container(const PushDataset& ds, const std::string& header) {
  Container c;
  c.header = header;
  for (Split sp : {Split::kTrain, Split::kSeen, Split::kNovel}) {
    const auto& rs = ds.split(sp);
    const std::string prefix = "push." + split_name(sp);
    Tensor sys = Tensor::zeros({rs.size(), 3});
    for (std::size_t i = 0; i < rs.size(); ++i) {
      sys.data()[3 * i] = rs[i].system.shape_id;
      sys.data()[3 * i + 1] = rs[i].system.mass;
      sys.data()[3 * i + 2] = rs[i].system.mu;
    }
    c.records.emplace_back(prefix + ".systems", std::move(sys));
    detail::put_trajectories(c, prefix, rs, true);
    detail::put_trajectories(c, prefix, rs, false);
  }
  return c;
}

inline PushDataset push_dataset_from(const Container& c) {
  PushDataset ds;
  for (Split sp : {Split::kTrain, Split::kSeen, Split::kNovel}) {
    const std::string prefix = "push." + split_name(sp);
    const Tensor& sys = c.at(prefix + ".systems");
    auto& out = sp == Split::kTrain ? ds.train : sp == Split::kSeen ? ds.seen : ds.novel;
    const std::size_t n = sys.size() / 3;
    for (std::size_t i = 0; i < n; ++i) {
      const int id = static_cast<int>(sys.data()[3 * i]);
      const auto& shape = library_shape(id);
      PushRecord r;
      r.system = make_push_system(id, shape.params, sys.data()[3 * i + 1], sys.data()[3 * i + 2]);
      r.probe = detail::get_trajectory(c, prefix + ".probe", i);
      r.traj = detail::get_trajectory(c, prefix + ".traj", i);
      out.push_back(std::move(r));
    }
  }
  return ds;
}

}  // namespace hdyn
