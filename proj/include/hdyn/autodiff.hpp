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

// Reverse-mode differentiation over dense tensors.
//
// A Var is a shared handle to a Node. Ops build the graph eagerly: each
// result node stores its value, its parents and a closure that pushes the
// node's gradient into its parents. backward() orders the reachable subgraph
// topologically and runs the closures once each, in reverse.
//
// Leaves created with parameter() keep their gradients across calls until
// zero_grad(); interior gradients are reset at the start of every backward().

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hdyn/kernels.hpp"
#include "hdyn/tensor.hpp"

namespace hdyn {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  std::string_view op = "leaf";
  bool requires_grad = false;

  bool is_leaf() const { return parents.empty(); }

  Tensor& ensure_grad() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) {
      grad = Tensor::zeros(value.shape());
    }
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(std::move(n));
  }
  static Var parameter(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Gradient after backward(); zeros when none has reached this node.
  Tensor grad() const {
    if (node_->grad.shape() == node_->value.shape()) return node_->grad;
    return Tensor::zeros(node_->value.shape());
  }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

inline Var make_op(std::string_view op, Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  if (!grad_mode()) return Var(std::move(n));
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.ptr());
  }
  if (n->requires_grad) n->backward_fn = std::move(fn);
  return Var(std::move(n));
}

inline Tensor* grad_of(Node& parent) {
  return parent.requires_grad ? &parent.ensure_grad() : nullptr;
}

// Interprets a rank-1 tensor as a single row.
inline std::size_t batch_rows(const Tensor& t) { return t.rank() >= 2 ? t.dim(0) : 1; }
inline std::size_t row_width(const Tensor& t) {
  return t.rank() >= 2 ? t.size() / t.dim(0) : t.size();
}

}  // namespace detail

// Disables graph recording on this thread for its lifetime; results are plain
// constants. Used for evaluation and planning.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Accumulates d(out)/d(leaf) into every reachable leaf with requires_grad.
// `out` must hold a single element unless a seed gradient is given.
inline void backward(const Var& out, const Tensor* seed = nullptr) {
  if (!out.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{out.node(), 0}};
  seen.insert(out.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->is_leaf()) n->grad = Tensor();
  }
  Tensor& g = out.node()->ensure_grad();
  if (seed) {
    if (seed->shape() != g.shape()) throw ShapeError("backward: seed shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*seed)[i];
  } else {
    if (g.size() != 1) throw ShapeError("backward: output is not scalar; pass a seed");
    g[0] += 1.0;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Dense layers

// x: [in] or [n, in]; w: [out, in]; b: [out].
inline Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2) throw ShapeError("linear: weight must be rank 2");
  const std::size_t out = wv.dim(0);
  const std::size_t in = wv.dim(1);
  if (detail::row_width(xv) != in) {
    throw ShapeError("linear: input width " + std::to_string(detail::row_width(xv)) +
                     " != weight fan-in " + std::to_string(in));
  }
  if (b.size() != out) throw ShapeError("linear: bias size mismatch");
  const std::size_t n = detail::batch_rows(xv);
  Tensor y = Tensor::zeros(xv.rank() >= 2 ? Shape{n, out} : Shape{out});
  for (std::size_t i = 0; i < n; ++i) {
    kernels::linear_row(xv.data().data() + i * in, wv.data().data(), b.value().data().data(),
                        in, out, y.data().data() + i * out);
  }
  return detail::make_op("linear", std::move(y), {x, w, b}, [n, in, out](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    Tensor* dx = detail::grad_of(xn);
    Tensor* dw = detail::grad_of(wn);
    Tensor* db = detail::grad_of(bn);
    for (std::size_t i = 0; i < n; ++i) {
      kernels::linear_row_backward(
          xn.value.data().data() + i * in, wn.value.data().data(),
          self.grad.data().data() + i * out, in, out,
          dx ? dx->data().data() + i * in : nullptr, dw ? dw->data().data() : nullptr,
          db ? db->data().data() : nullptr);
    }
  });
}

// Linear layer whose weights live inside a flat parameter vector: W occupies
// [offset, offset + out*in) row-major and b the following `out` entries.
// flat: [P] shared across the batch, or [n, P] with one weight vector per row.
inline Var linear_flat(const Var& x, const Var& flat, std::size_t offset, std::size_t in,
                       std::size_t out) {
  const Tensor& xv = x.value();
  const Tensor& fv = flat.value();
  if (detail::row_width(xv) != in) {
    throw ShapeError("linear_flat: input width " + std::to_string(detail::row_width(xv)) +
                     " != " + std::to_string(in));
  }
  const std::size_t n = detail::batch_rows(xv);
  const bool per_sample = fv.rank() >= 2;
  const std::size_t p = detail::row_width(fv);
  if (offset + out * in + out > p) throw ShapeError("linear_flat: weight slice out of range");
  if (per_sample && fv.dim(0) != n) {
    throw ShapeError("linear_flat: " + std::to_string(fv.dim(0)) + " weight rows for " +
                     std::to_string(n) + " inputs");
  }
  Tensor y = Tensor::zeros(xv.rank() >= 2 || per_sample ? Shape{n, out} : Shape{out});
  for (std::size_t i = 0; i < n; ++i) {
    const double* base = fv.data().data() + (per_sample ? i * p : 0) + offset;
    kernels::linear_row(xv.data().data() + i * in, base, base + out * in, in, out,
                        y.data().data() + i * out);
  }
  return detail::make_op(
      "linear_flat", std::move(y), {x, flat}, [n, in, out, p, offset, per_sample](Node& self) {
        Node& xn = *self.parents[0];
        Node& fn = *self.parents[1];
        Tensor* dx = detail::grad_of(xn);
        Tensor* df = detail::grad_of(fn);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t row = (per_sample ? i * p : 0) + offset;
          double* dbase = df ? df->data().data() + row : nullptr;
          kernels::linear_row_backward(xn.value.data().data() + i * in,
                                       fn.value.data().data() + row,
                                       self.grad.data().data() + i * out, in, out,
                                       dx ? dx->data().data() + i * in : nullptr, dbase,
                                       dbase ? dbase + out * in : nullptr);
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <class F, class G>
Var unary(std::string_view op, const Var& a, F f, G dfdx) {
  Tensor y = Tensor::zeros(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i]);
  return make_op(op, std::move(y), {a}, [dfdx](Node& self) {
    Node& an = *self.parents[0];
    Tensor& ga = an.ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += self.grad[i] * dfdx(an.value[i], self.value[i]);
    }
  });
}

inline void require_same(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace detail

inline Var leaky_relu(const Var& a) {
  return detail::unary(
      "leaky_relu", a, [](double v) { return kernels::leaky_relu(v); },
      [](double x, double) { return kernels::leaky_relu_grad(x); });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      "tanh", a, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      "sigmoid", a, [](double v) { return kernels::sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var scale(const Var& a, double c) {
  return detail::unary(
      "scale", a, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Var square(const Var& a) {
  return detail::unary(
      "square", a, [](double v) { return v * v; }, [](double x, double) { return 2.0 * x; });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same("add", a, b);
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return detail::make_op("add", std::move(y), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same("sub", a, b);
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return detail::make_op("sub", std::move(y), {a, b}, [](Node& self) {
    if (Tensor* g = detail::grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Tensor* g = detail::grad_of(*self.parents[1])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same("mul", a, b);
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return detail::make_op("mul", std::move(y), {a, b}, [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (Tensor* g = detail::grad_of(an)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bn.value[i];
    }
    if (Tensor* g = detail::grad_of(bn)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * an.value[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

// Concatenates along the last axis. Inputs are all rank 1 or all [n, *].
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const bool matrix = parts[0].value().rank() >= 2;
  const std::size_t n = detail::batch_rows(parts[0].value());
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if ((p.value().rank() >= 2) != matrix || detail::batch_rows(p.value()) != n) {
      throw ShapeError("concat: incompatible inputs " + shape_str(p.shape()));
    }
    widths.push_back(detail::row_width(p.value()));
    total += widths.back();
  }
  Tensor y = Tensor::zeros(matrix ? Shape{n, total} : Shape{total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(pv.data().data() + i * widths[k], widths[k],
                  y.data().data() + i * total + off);
    }
    off += widths[k];
  }
  return detail::make_op("concat", std::move(y), parts, [n, widths, total](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (Tensor* g = detail::grad_of(*self.parents[k])) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) {
            (*g)[i * widths[k] + j] += self.grad[i * total + off + j];
          }
        }
      }
      off += widths[k];
    }
  });
}

// Columns [begin, end) of every row.
inline Var slice(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  const std::size_t w = detail::row_width(av);
  if (begin > end || end > w) throw ShapeError("slice: range out of bounds");
  const std::size_t n = detail::batch_rows(av);
  const std::size_t len = end - begin;
  Tensor y = Tensor::zeros(av.rank() >= 2 ? Shape{n, len} : Shape{len});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data().data() + i * w + begin, len, y.data().data() + i * len);
  }
  return detail::make_op("slice", std::move(y), {a}, [n, w, begin, len](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < len; ++j) g[i * w + begin + j] += self.grad[i * len + j];
    }
  });
}

inline Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return detail::make_op("reshape", std::move(y), {a}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return detail::make_op("sum", Tensor::scalar(s), {a}, [](Node& self) {
    Tensor& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Mean over all elements of (pred - target)^2.
inline Var mse(const Var& pred, const Var& target) {
  detail::require_same("mse", pred, target);
  return mean(square(sub(pred, target)));
}

// Mean over rows of the Euclidean norm of (pred - target). The subgradient at
// a zero residual is taken as zero.
inline Var mean_row_norm(const Var& pred, const Var& target) {
  detail::require_same("mean_row_norm", pred, target);
  const Tensor& pv = pred.value();
  const Tensor& tv = target.value();
  const std::size_t n = detail::batch_rows(pv);
  const std::size_t w = detail::row_width(pv);
  std::vector<double> norms(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      const double d = pv[i * w + j] - tv[i * w + j];
      s += d * d;
    }
    norms[i] = std::sqrt(s);
    total += norms[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return detail::make_op(
      "mean_row_norm", Tensor::scalar(total * inv_n), {pred, target},
      [n, w, norms, inv_n](Node& self) {
        Node& pn = *self.parents[0];
        Node& tn = *self.parents[1];
        Tensor* gp = detail::grad_of(pn);
        Tensor* gt = detail::grad_of(tn);
        for (std::size_t i = 0; i < n; ++i) {
          if (norms[i] == 0.0) continue;
          for (std::size_t j = 0; j < w; ++j) {
            const double d = pn.value[i * w + j] - tn.value[i * w + j];
            const double g = self.grad[0] * inv_n * d / norms[i];
            if (gp) (*gp)[i * w + j] += g;
            if (gt) (*gt)[i * w + j] -= g;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution

// x: [n, ci, h, w]; k: [co, ci, ks, ks]; b: [co]. Same padding, stride 1.
inline Var conv2d(const Var& x, const Var& k, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& kv = k.value();
  if (xv.rank() != 4 || kv.rank() != 4) throw ShapeError("conv2d: expects rank-4 input and kernel");
  const std::size_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t co = kv.dim(0), ks = kv.dim(2);
  if (kv.dim(1) != ci || kv.dim(3) != ks) {
    throw ShapeError("conv2d: kernel " + shape_str(kv.shape()) + " does not fit input " +
                     shape_str(xv.shape()));
  }
  if (b.size() != co) throw ShapeError("conv2d: bias size mismatch");
  Tensor y = Tensor::zeros({n, co, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    kernels::conv2d_same(xv.data().data() + i * ci * h * w, kv.data().data(),
                         b.value().data().data(), ci, co, h, w, ks,
                         y.data().data() + i * co * h * w);
  }
  return detail::make_op("conv2d", std::move(y), {x, k, b}, [n, ci, co, h, w, ks](Node& self) {
    Node& xn = *self.parents[0];
    Node& kn = *self.parents[1];
    Node& bn = *self.parents[2];
    Tensor* dx = detail::grad_of(xn);
    Tensor* dk = detail::grad_of(kn);
    Tensor* db = detail::grad_of(bn);
    for (std::size_t i = 0; i < n; ++i) {
      kernels::conv2d_same_backward(
          xn.value.data().data() + i * ci * h * w, kn.value.data().data(),
          self.grad.data().data() + i * co * h * w, ci, co, h, w, ks,
          dx ? dx->data().data() + i * ci * h * w : nullptr, dk ? dk->data().data() : nullptr,
          db ? db->data().data() : nullptr);
    }
  });
}

// x: [n, c, h, w] -> [n, c, h/2, w/2].
inline Var maxpool2(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || xv.dim(2) % 2 || xv.dim(3) % 2) {
    throw ShapeError("maxpool2: expects [n,c,h,w] with even h, w; got " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t per_in = c * h * w;
  const std::size_t per_out = c * (h / 2) * (w / 2);
  Tensor y = Tensor::zeros({n, c, h / 2, w / 2});
  std::vector<std::size_t> argmax(n * per_out);
  for (std::size_t i = 0; i < n; ++i) {
    kernels::maxpool2(xv.data().data() + i * per_in, c, h, w, y.data().data() + i * per_out,
                      argmax.data() + i * per_out);
  }
  return detail::make_op("maxpool2", std::move(y), {x},
                         [n, per_in, per_out, argmax = std::move(argmax)](Node& self) {
                           Tensor& g = self.parents[0]->ensure_grad();
                           for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t o = 0; o < per_out; ++o) {
                               g[i * per_in + argmax[i * per_out + o]] +=
                                   self.grad[i * per_out + o];
                             }
                           }
                         });
}

}  // namespace hdyn
