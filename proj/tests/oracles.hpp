/* Copyright (c) 2026 The sfgsr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include "sfgsr/numerics/tensor.hpp"

// Loop-level reference implementations of the loss terms, written without the
// autodiff engine. Inputs are [B, C, H, W].
namespace sfgsr::testing {

inline double l1_oracle(const num::Tensor<double>& x, const num::Tensor<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

// mean |dx(x - y)| + mean |dy(x - y)| with forward differences.
inline double edge_oracle(const num::Tensor<double>& x, const num::Tensor<double>& y) {
  const int P = static_cast<int>(x.size() / (x.dim(2) * x.dim(3)));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  auto d = [&](int p, int i, int j) {
    const auto k = static_cast<std::size_t>((p * H + i) * W + j);
    return x[k] - y[k];
  };
  double sx = 0, sy = 0;
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        if (j + 1 < W) sx += std::abs(d(p, i, j + 1) - d(p, i, j));
        if (i + 1 < H) sy += std::abs(d(p, i + 1, j) - d(p, i, j));
      }
  return sx / (P * H * (W - 1)) + sy / (P * (H - 1) * W);
}

// Direct per-window SSIM with the Gaussian weights written out.
inline double ssim_oracle(const num::Tensor<double>& x, const num::Tensor<double>& y) {
  const int B = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  double g[11], gs = 0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i + 11 <= H; ++i)
        for (int j = 0; j + 11 <= W; ++j) {
          double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
          for (int u = 0; u < 11; ++u)
            for (int v = 0; v < 11; ++v) {
              const double w = g[u] * g[v] / (gs * gs);
              const double a = x.at({b, c, i + u, j + v}), e = y.at({b, c, i + u, j + v});
              mx += w * a;
              my += w * e;
              xx += w * a * a;
              yy += w * e * e;
              xy += w * a * e;
            }
          const double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
          total += (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sx + sy + c2));
          ++count;
        }
  return total / count;
}

// Naive O(N^2) DFT of every plane; returns mean smoothed modulus of the difference.
inline double freq_oracle(const num::Tensor<double>& x, const num::Tensor<double>& y, bool amplitude) {
  const int P = static_cast<int>(x.size() / (x.dim(2) * x.dim(3)));
  const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  const double eps = 1e-12;
  auto dft = [&](const num::Tensor<double>& t, int p, int k, int l) {
    std::complex<double> s = 0;
    for (int m = 0; m < H; ++m)
      for (int n = 0; n < W; ++n)
        s += t[static_cast<std::size_t>(p * H * W + m * W + n)] *
             std::polar(1.0, -2 * std::numbers::pi * (double(k * m) / H + double(l * n) / W));
    return s;
  };
  auto smooth = [&](double m2) { return std::sqrt(m2 + eps) - std::sqrt(eps); };
  double total = 0;
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < H; ++k)
      for (int l = 0; l < W; ++l) {
        const auto a = dft(x, p, k, l), b = dft(y, p, k, l);
        if (!amplitude) {
          total += smooth(std::norm(a - b));
        } else {
          const double d = smooth(std::norm(a)) - smooth(std::norm(b));
          total += smooth(d * d);
        }
      }
  return total / (P * H * W);
}

}  // namespace sfgsr::testing
