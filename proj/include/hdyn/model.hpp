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

// Common interface of every learned dynamics model.
//
// Training sees normalized mini-batches and returns a scalar loss. Inference
// goes through bind(): the model digests one system observation (encodes,
// adapts or retrieves) and returns a Predictor that maps raw states and
// actions to raw state deltas.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hdyn/adam.hpp"
#include "hdyn/features.hpp"
#include "hdyn/nn.hpp"

namespace hdyn {

enum class Objective { kMse, kEuclid };

struct ModelConfig {
  TaskKind task = TaskKind::kPush;
  std::vector<std::size_t> target_hidden{32, 32, 32};
  std::size_t hyper_hidden = 16;
  std::vector<std::size_t> int_hidden{8};
  std::size_t z_int = 2;
  std::size_t z_vis = 8;
  std::size_t decoder_hidden = 64;
  bool use_decoder = true;
  bool canonical_shape = false;  // canonical grid to the encoder, theta in the expert state
  double aux_weight = 0.1;
  Objective objective = Objective::kMse;
  std::size_t gru_hidden = 32;
  double inner_lr = 0.01;
  std::size_t inner_steps = 5;
  std::vector<int> expert_ids;          // pushing: library shape ids
  std::vector<double> expert_params;    // locomotion: terrain parameter per expert
};

struct Batch {
  std::vector<const Sample*> rows;
  Tensor full, obs, action, delta, window, side;  // normalized, [n, *]
  Tensor grid;      // [n, 1, 16, 16] (pushing)
  Tensor aux_grid;  // [m, 1, 16, 16] shape-only stream, may be empty

  std::size_t size() const { return rows.size(); }
};

inline Batch make_batch(TaskKind task, const Normalizers& nz, std::vector<const Sample*> rows,
                        bool oriented_grid = true) {
  if (rows.empty()) throw std::invalid_argument("make_batch: empty batch");
  Batch b;
  b.rows = std::move(rows);
  const std::size_t n = b.rows.size();
  std::vector<double> f, o, a, d, w, s;
  for (const Sample* x : b.rows) {
    const auto sf = state_features(task, x->full);
    f.insert(f.end(), sf.begin(), sf.end());
    const auto ob = obs_of(task, x->full);
    o.insert(o.end(), ob.begin(), ob.end());
    a.insert(a.end(), x->action.begin(), x->action.end());
    d.insert(d.end(), x->delta.begin(), x->delta.end());
    w.insert(w.end(), x->obs->window.begin(), x->obs->window.end());
    s.insert(s.end(), x->obs->side.begin(), x->obs->side.end());
  }
  b.full = normalize_rows(nz.full, f);
  b.obs = normalize_rows(nz.obs, o);
  b.action = normalize_rows(nz.action, a);
  b.delta = normalize_rows(nz.delta, d);
  b.window = normalize_rows(nz.window, w);
  b.side = normalize_rows(nz.side, s);
  if (task == TaskKind::kPush) {
    b.grid = Tensor::zeros({n, 1, kGridSize, kGridSize});
    for (std::size_t i = 0; i < n; ++i) {
      const Sample* x = b.rows[i];
      const Tensor g =
          oriented_grid ? rotate_grid(x->obs->grid, x->full[kThetaIndex]) : x->obs->grid;
      std::copy(g.data().begin(), g.data().end(),
                b.grid.data().begin() + static_cast<std::ptrdiff_t>(i * g.size()));
    }
  }
  return b;
}

// Maps raw states and actions (rows) to raw deltas [n, delta].
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Tensor predict(std::span<const double> full, std::span<const double> action) const = 0;
};

inline Var prediction_loss(const Var& pred, const Var& target, Objective obj) {
  return obj == Objective::kMse ? mse(pred, target) : mean_row_norm(pred, target);
}

class Model {
 public:
  Model(ModelConfig cfg, Normalizers nz) : cfg_(std::move(cfg)), nz_(std::move(nz)) {}
  virtual ~Model() = default;

  virtual std::string method() const = 0;
  virtual Var loss(const Batch& b) = 0;
  virtual std::unique_ptr<Predictor> bind(const SystemObs& obs) const = 0;

  // One optimizer update; returns the loss before the update.
  virtual double train_step(const Batch& b, AdamState& adam) {
    params_.zero_grad();
    const Var l = loss(b);
    backward(l);
    adam_step(adam, params_);
    return l.value()[0];
  }

  // Disjoint training subsets (expert ensembles train one expert per id).
  virtual std::vector<int> partitions() const { return {-1}; }
  virtual bool uses_shape_stream() const { return false; }
  virtual bool oriented_grid() const { return true; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const Normalizers& norm() const { return nz_; }
  Normalizers& norm() { return nz_; }

 protected:
  TaskDims dims() const { return task_dims(cfg_.task); }

  // Normalized rows of an input block.
  static Tensor norm_rows(const Normalizer& nz, std::span<const double> raw) {
    return normalize_rows(nz, raw);
  }
  Tensor denorm_delta(const Tensor& pred) const {
    Tensor out = Tensor::zeros(pred.shape());
    const std::size_t d = nz_.delta.dim();
    for (std::size_t i = 0; i < pred.rows(); ++i) {
      nz_.delta.invert(pred.data().data() + i * d, out.data().data() + i * d);
    }
    return Tensor::wrap(out.shape(), std::move(out.vec()));
  }
  Tensor obs_rows(std::span<const double> full) const {
    const std::size_t fd = dims().full;
    const std::size_t n = full.size() / fd;
    std::vector<double> o;
    o.reserve(n * dims().obs);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = obs_of(cfg_.task, full.subspan(i * fd, fd));
      o.insert(o.end(), r.begin(), r.end());
    }
    return normalize_rows(nz_.obs, o);
  }

  ModelConfig cfg_;
  Normalizers nz_;
  ParamSet params_;
};

// Row-wise concatenation of [n, *] blocks.
inline Tensor concat_cols(const std::vector<const Tensor*>& parts) {
  const std::size_t n = parts.front()->rows();
  std::size_t w = 0;
  for (const Tensor* p : parts) w += p->cols();
  Tensor out = Tensor::zeros({n, w});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (const Tensor* p : parts) {
      const std::size_t c = p->cols();
      std::copy_n(p->data().data() + i * c, c, out.data().data() + i * w + off);
      off += c;
    }
  }
  return out;
}

}  // namespace hdyn
