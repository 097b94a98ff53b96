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

// Raw loops shared by the differentiable ops and the no-graph fast paths.
// Every forward result in the library goes through these functions, so the
// graph path and the planning path accumulate in the same order and agree
// bitwise.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

namespace hdyn::kernels {

inline constexpr double kLeakySlope = 0.01;

// y[o] = dot(x, W[o, :]) + b[o] for one row; W is [out x in] row-major.
inline void linear_row(const double* x, const double* w, const double* b,
                       std::size_t in, std::size_t out, double* y) {
  for (std::size_t o = 0; o < out; ++o) {
    const double* wr = w + o * in;
    double acc = 0.0;
    for (std::size_t k = 0; k < in; ++k) acc += x[k] * wr[k];
    y[o] = acc + b[o];
  }
}

// Backward of linear_row. Any of dx, dw, db may be null.
inline void linear_row_backward(const double* x, const double* w, const double* dy,
                                std::size_t in, std::size_t out, double* dx,
                                double* dw, double* db) {
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    const double* wr = w + o * in;
    if (dx) {
      for (std::size_t k = 0; k < in; ++k) dx[k] += g * wr[k];
    }
    if (dw) {
      double* dwr = dw + o * in;
      for (std::size_t k = 0; k < in; ++k) dwr[k] += g * x[k];
    }
    if (db) db[o] += g;
  }
}

inline double leaky_relu(double v) { return v > 0.0 ? v : kLeakySlope * v; }
inline double leaky_relu_grad(double v) { return v > 0.0 ? 1.0 : kLeakySlope; }
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Same-padded 2-D convolution for one sample.
// x: [ci, h, w], k: [co, ci, ks, ks], b: [co], y: [co, h, w].
inline void conv2d_same(const double* x, const double* k, const double* b,
                        std::size_t ci, std::size_t co, std::size_t h, std::size_t w,
                        std::size_t ks, double* y) {
  const long pad = static_cast<long>(ks / 2);
  for (std::size_t oc = 0; oc < co; ++oc) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double acc = 0.0;
        for (std::size_t ic = 0; ic < ci; ++ic) {
          const double* xc = x + ic * h * w;
          const double* kc = k + (oc * ci + ic) * ks * ks;
          for (std::size_t kr = 0; kr < ks; ++kr) {
            const long rr = static_cast<long>(r + kr) - pad;
            if (rr < 0 || rr >= static_cast<long>(h)) continue;
            for (std::size_t kcol = 0; kcol < ks; ++kcol) {
              const long cc = static_cast<long>(c + kcol) - pad;
              if (cc < 0 || cc >= static_cast<long>(w)) continue;
              acc += xc[rr * static_cast<long>(w) + cc] * kc[kr * ks + kcol];
            }
          }
        }
        y[(oc * h + r) * w + c] = acc + b[oc];
      }
    }
  }
}

inline void conv2d_same_backward(const double* x, const double* k, const double* dy,
                                 std::size_t ci, std::size_t co, std::size_t h,
                                 std::size_t w, std::size_t ks, double* dx, double* dk,
                                 double* db) {
  const long pad = static_cast<long>(ks / 2);
  for (std::size_t oc = 0; oc < co; ++oc) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double g = dy[(oc * h + r) * w + c];
        if (g == 0.0) continue;
        if (db) db[oc] += g;
        for (std::size_t ic = 0; ic < ci; ++ic) {
          const std::size_t xoff = ic * h * w;
          const std::size_t koff = (oc * ci + ic) * ks * ks;
          for (std::size_t kr = 0; kr < ks; ++kr) {
            const long rr = static_cast<long>(r + kr) - pad;
            if (rr < 0 || rr >= static_cast<long>(h)) continue;
            for (std::size_t kcol = 0; kcol < ks; ++kcol) {
              const long cc = static_cast<long>(c + kcol) - pad;
              if (cc < 0 || cc >= static_cast<long>(w)) continue;
              const std::size_t xi = xoff + static_cast<std::size_t>(rr) * w +
                                     static_cast<std::size_t>(cc);
              if (dx) dx[xi] += g * k[koff + kr * ks + kcol];
              if (dk) dk[koff + kr * ks + kcol] += g * x[xi];
            }
          }
        }
      }
    }
  }
}

// 2x2 stride-2 max pool for one sample; argmax receives flat input indices.
// Ties resolve to the first element in row-major window order.
inline void maxpool2(const double* x, std::size_t ch, std::size_t h, std::size_t w,
                     double* y, std::size_t* argmax) {
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t q = 0; q < ow; ++q) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dq = 0; dq < 2; ++dq) {
            const std::size_t idx = (c * h + 2 * r + dr) * w + 2 * q + dq;
            if (x[idx] > best) {
              best = x[idx];
              bi = idx;
            }
          }
        }
        const std::size_t o = (c * oh + r) * ow + q;
        y[o] = best;
        if (argmax) argmax[o] = bi;
      }
    }
  }
}

}  // namespace hdyn::kernels
