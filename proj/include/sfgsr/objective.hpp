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
#include <string>
#include <vector>

#include "sfgsr/key_value.hpp"
#include "sfgsr/numerics/ops.hpp"

namespace sfgsr {

using num::Tape;
using num::Tensor;
using num::Var;

inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr std::int64_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kFreqEps = 1e-12;

struct FreqOptions {
  // Reflect-pad non power-of-two extents up to the next power of two;
  // otherwise such extents raise ConfigError.
  bool pad_to_pow2 = true;
  // Compare amplitude spectra instead of complex spectra.
  bool amplitude = false;
  bool operator==(const FreqOptions&) const = default;
};

struct LossWeights {
  double l1 = 1.0;
  double ssim = 0.1;
  double edge = 0.1;
  double freq = 0.05;
  bool use_l1 = true;
  bool use_ssim = true;
  bool use_edge = true;
  bool use_freq = true;
  FreqOptions freq_options;

  void validate() const;  // throws ConfigError on negative weights
  bool enabled_l1() const { return use_l1 && l1 > 0.0; }
  bool enabled_ssim() const { return use_ssim && ssim > 0.0; }
  bool enabled_edge() const { return use_edge && edge > 0.0; }
  bool enabled_freq() const { return use_freq && freq > 0.0; }
  // Human-readable term list, e.g. "L1+SSIM+Edge".
  std::string label() const;

  void write(KeyValues& kv, const std::string& prefix) const;
  static LossWeights read(const KeyValues& kv, const std::string& prefix);
  static std::vector<std::string> keys(const std::string& prefix);
  bool operator==(const LossWeights&) const = default;
};

// All losses take [B, b, H, W] pairs of equal shape and return a scalar Var.
template <typename T>
Var<T> l1_loss(const Var<T>& sr, const Var<T>& hr);

// Mean SSIM over all valid 11 x 11 windows of every channel and image.
template <typename T>
Var<T> ssim(const Var<T>& sr, const Var<T>& hr);
template <typename T>
Var<T> ssim_loss(const Var<T>& sr, const Var<T>& hr);

// mean|dx(sr) - dx(hr)| + mean|dy(sr) - dy(hr)| with forward differences.
template <typename T>
Var<T> edge_loss(const Var<T>& sr, const Var<T>& hr);

// Mean over DFT bins of sqrt(|F(sr) - F(hr)|^2 + eps) - sqrt(eps), with the
// unnormalized per-channel 2D DFT.
template <typename T>
Var<T> freq_loss(const Var<T>& sr, const Var<T>& hr, const FreqOptions& opts = {});

template <typename T>
struct LossBreakdown {
  Var<T> total;
  // Unweighted term values; 0 for disabled terms.
  double l1 = 0, ssim = 0, edge = 0, freq = 0;
};

// Disabled terms are not evaluated.
template <typename T>
LossBreakdown<T> total_loss(const Var<T>& sr, const Var<T>& hr, const LossWeights& w);

// ---- metrics on plain tensors ([b, H, W] or [B, b, H, W]) ----
// +infinity when the images are identical.
template <typename T>
double psnr(const Tensor<T>& sr, const Tensor<T>& hr, double peak = 1.0);
template <typename T>
double ssim_metric(const Tensor<T>& sr, const Tensor<T>& hr);
template <typename T>
double mae(const Tensor<T>& sr, const Tensor<T>& hr);

// Normalized 11 x 11 Gaussian window, sigma 1.5.
Tensor<double> ssim_window();

}  // namespace sfgsr
