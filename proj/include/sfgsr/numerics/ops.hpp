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

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sfgsr/numerics/rng.hpp"
#include "sfgsr/numerics/tape.hpp"
#include "sfgsr/numerics/tensor.hpp"

// Differentiable operators. Every function records onto the tape of its
// inputs; forward values are exact regardless of whether the tape records.
namespace sfgsr::num {

enum class PadMode { kZero, kReplicate };

// ---- elementwise, numpy-style broadcasting over trailing dims ----
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add_scalar(const Var<T>& x, T c);
template <typename T> Var<T> mul_scalar(const Var<T>& x, T c);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator+(const Var<T>& a, T c) { return add_scalar(a, c); }
template <typename T> Var<T> operator*(const Var<T>& a, T c) { return mul_scalar(a, c); }
template <typename T> Var<T> operator*(T c, const Var<T>& a) { return mul_scalar(a, c); }

// ---- unary ----
template <typename T> Var<T> gelu(const Var<T>& x);  // exact x * Phi(x)
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> abs(const Var<T>& x);
template <typename T> Var<T> sqrt(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
template <typename T> Var<T> sin(const Var<T>& x);
template <typename T> Var<T> clamp_max(const Var<T>& x, T hi);

// ---- reductions ----
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);

// ---- linear algebra ----
// y[..., j] = sum_i x[..., i] W[i, j] + b[j]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b = std::nullopt);
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return linear(x, w, std::optional<Var<T>>(b));
}
// Batched a @ b (or a @ b^T) with identical leading dims.
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

// ---- layout ----
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm);
template <typename T> Var<T> narrow(const Var<T>& x, std::size_t axis, std::int64_t start, std::int64_t length);
template <typename T> Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis);
// torch.roll semantics: out[(i + shift) mod n] = x[i] along `axis`.
template <typename T> Var<T> roll(const Var<T>& x, std::size_t axis, std::int64_t shift);
// Reflect-pad the last two dims at the bottom and right edge (edge not repeated).
template <typename T> Var<T> pad_reflect(const Var<T>& x, std::int64_t bottom, std::int64_t right);
// Keep the top-left h x w block of the last two dims.
template <typename T> Var<T> crop(const Var<T>& x, std::int64_t h, std::int64_t w);
// Gather rows of a [M, K] table.
template <typename T> Var<T> take_rows(const Var<T>& table, const std::vector<std::int64_t>& rows);
// x[..., i + 1] - x[..., i] along `axis`.
template <typename T> Var<T> forward_diff(const Var<T>& x, std::size_t axis);

// ---- image operators (NCHW) ----
template <typename T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& kernel, PadMode pad,
                        const std::optional<Var<T>>& bias = std::nullopt);
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias = std::nullopt);
template <typename T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& kernel, PadMode pad, const Var<T>& bias) {
  return depthwise_conv2d(x, kernel, pad, std::optional<Var<T>>(bias));
}
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias) {
  return conv2d(x, kernel, std::optional<Var<T>>(bias));
}
// Fixed 2D kernel applied to every channel, valid region only.
template <typename T> Var<T> filter2d_valid(const Var<T>& x, const Tensor<T>& kernel);
template <typename T> Var<T> pixel_shuffle(const Var<T>& x, std::int64_t s);

// ---- normalization ----
template <typename T> Var<T> softmax(const Var<T>& x, std::size_t axis);
template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));
// x / max(||x||_2, eps) over the last dim.
template <typename T> Var<T> normalize_last(const Var<T>& x, T eps);

// ---- spectral ----
// Unnormalized 2D DFT over the last two dims (both powers of two).
template <typename T> std::pair<Var<T>, Var<T>> dft2(const Var<T>& x);

// ---- stochastic regularizers (identity when rate == 0) ----
template <typename T> Var<T> dropout(const Var<T>& x, double rate, Rng& rng);
// Drops whole samples (leading dim) and rescales survivors by 1/keep.
template <typename T> Var<T> drop_path(const Var<T>& x, double rate, Rng& rng);

// ---- plain tensor kernels shared with non-differentiable code ----
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, PadMode pad);
// Catmull-Rom (a = -0.5) resampling with half-pixel centers and clamped edges.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w);
// Scale by num/den; output extents are floor(extent * num / den).
template <typename T>
Tensor<T> bicubic_rescale(const Tensor<T>& x, std::int64_t num, std::int64_t den);
template <typename T> Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t s);
template <typename T> Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t s);
// Real/imaginary spectrum of the last two dims.
template <typename T> std::pair<Tensor<T>, Tensor<T>> dft2(const Tensor<T>& x);

bool is_power_of_two(std::int64_t n);

namespace testing {
// Scales the GELU backward rule by 1.1 while set. Used only to prove that the
// gradient harness detects a broken rule.
void set_corrupt_gelu_backward(bool on);
bool corrupt_gelu_backward();
}  // namespace testing

}  // namespace sfgsr::num
