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

#include "sfgsr/degrade.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <set>

#include "sfgsr/errors.hpp"
#include "sfgsr/numerics/ops.hpp"
#include "sfgsr/numerics/rng.hpp"

namespace sfgsr {

void DegradationConfig::validate() const {
  if (!(blur_sigma > 0.0)) throw ConfigError("degradation: blur_sigma must be > 0");
  if (blur_kernel_size < 1 || blur_kernel_size % 2 == 0) {
    throw ConfigError("degradation: blur_kernel_size must be odd, got " + std::to_string(blur_kernel_size));
  }
  if (scale < 1) throw ConfigError("degradation: scale must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("degradation: noise_sigma must be >= 0");
}

KeyValues DegradationConfig::to_key_values() const {
  KeyValues kv;
  kv.set("blur_sigma", format_double(blur_sigma));
  kv.set("blur_kernel_size", std::to_string(blur_kernel_size));
  kv.set("scale", std::to_string(scale));
  kv.set("noise_sigma", format_double(noise_sigma));
  kv.set("seed", std::to_string(seed));
  return kv;
}

DegradationConfig DegradationConfig::from_key_values(const KeyValues& kv) {
  kv.reject_unknown({"blur_sigma", "blur_kernel_size", "scale", "noise_sigma", "seed"}, "degradation config");
  DegradationConfig c;
  if (kv.has("blur_sigma")) c.blur_sigma = kv.get_double("blur_sigma");
  if (kv.has("blur_kernel_size")) c.blur_kernel_size = kv.get_int("blur_kernel_size");
  if (kv.has("scale")) c.scale = kv.get_int("scale");
  if (kv.has("noise_sigma")) c.noise_sigma = kv.get_double("noise_sigma");
  if (kv.has("seed")) {
    const auto& s = kv.get("seed");
    const auto r = std::from_chars(s.data(), s.data() + s.size(), c.seed);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError("config key 'seed': expected an unsigned integer, got '" + s + "'");
    }
  }
  c.validate();
  return c;
}

Tensor<double> gaussian_kernel(double sigma, std::int64_t k) {
  if (k < 1 || k % 2 == 0) throw ConfigError("gaussian_kernel: size must be odd, got " + std::to_string(k));
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be > 0");
  Tensor<double> g({k, k});
  const auto r = k / 2;
  double total = 0;
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < k; ++j) {
      const double d2 = static_cast<double>((i - r) * (i - r) + (j - r) * (j - r));
      total += g.at({i, j}) = std::exp(-d2 / (2.0 * sigma * sigma));
    }
  for (auto& v : g.data()) v /= total;
  return g;
}

template <typename T>
Tensor<T> degrade(const Tensor<T>& hr, const DegradationConfig& config, std::uint64_t image_index) {
  config.validate();
  if (hr.rank() != 3) throw ShapeError("degrade: expected [bands, H, W], got " + num::to_string(hr.shape()));
  const auto b = hr.dim(0), H = hr.dim(1), W = hr.dim(2), s = config.scale;
  if (H % s != 0 || W % s != 0) {
    throw ShapeError("degrade: " + std::to_string(H) + "x" + std::to_string(W) +
                     " is not divisible by scale " + std::to_string(s));
  }
  const auto k = config.blur_kernel_size;
  const auto g = gaussian_kernel(config.blur_sigma, k);
  Tensor<T> kernel({b, k, k});
  for (std::int64_t c = 0; c < b; ++c)
    for (std::int64_t t = 0; t < k * k; ++t) kernel[static_cast<std::size_t>(c * k * k + t)] = static_cast<T>(g[static_cast<std::size_t>(t)]);
  const Tensor<T> blurred = num::depthwise_conv2d(hr.reshaped({1, b, H, W}), kernel, num::PadMode::kReplicate);
  Tensor<T> lr = num::bicubic_resize(blurred, H / s, W / s).reshaped({b, H / s, W / s});
  if (config.noise_sigma > 0.0) {
    num::Rng rng(config.seed ^ image_index);
    for (auto& v : lr.data()) v = static_cast<T>(static_cast<double>(v) + config.noise_sigma * rng.normal());
  }
  for (auto& v : lr.data()) v = std::clamp(v, T(0), T(1));
  return lr;
}

template <typename T>
std::vector<PatchPair<T>> extract_patch_pairs(const Tensor<T>& hr, const Tensor<T>& lr,
                                              std::int64_t lr_patch, std::int64_t scale,
                                              std::size_t count, std::uint64_t seed) {
  if (hr.rank() != 3 || lr.rank() != 3 || hr.dim(0) != lr.dim(0) || hr.dim(1) != scale * lr.dim(1) ||
      hr.dim(2) != scale * lr.dim(2)) {
    throw ShapeError("extract_patch_pairs: hr " + num::to_string(hr.shape()) + " is not " +
                     std::to_string(scale) + "x lr " + num::to_string(lr.shape()));
  }
  if (lr_patch < 1 || lr_patch > lr.dim(1) || lr_patch > lr.dim(2)) {
    throw ConfigError("extract_patch_pairs: patch " + std::to_string(lr_patch) + " does not fit " +
                      num::to_string(lr.shape()));
  }
  const auto b = lr.dim(0), hp = lr_patch * scale;
  num::Rng rng(seed);
  std::vector<PatchPair<T>> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    PatchPair<T> p;
    p.lr_y = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(lr.dim(1) - lr_patch + 1)));
    p.lr_x = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(lr.dim(2) - lr_patch + 1)));
    p.hr_y = p.lr_y * scale;
    p.hr_x = p.lr_x * scale;
    p.lr = Tensor<T>({b, lr_patch, lr_patch});
    p.hr = Tensor<T>({b, hp, hp});
    for (std::int64_t c = 0; c < b; ++c) {
      for (std::int64_t i = 0; i < lr_patch; ++i)
        for (std::int64_t j = 0; j < lr_patch; ++j) p.lr.at({c, i, j}) = lr.at({c, p.lr_y + i, p.lr_x + j});
      for (std::int64_t i = 0; i < hp; ++i)
        for (std::int64_t j = 0; j < hp; ++j) p.hr.at({c, i, j}) = hr.at({c, p.hr_y + i, p.hr_x + j});
    }
    out.push_back(std::move(p));
  }
  return out;
}

template <typename T>
Tensor<T> synthetic_scene(std::int64_t bands, std::int64_t height, std::int64_t width, std::uint64_t seed) {
  if (bands < 1 || height < 1 || width < 1) throw ConfigError("synthetic_scene: extents must be positive");
  num::Rng rng(seed);
  constexpr double kPi = std::numbers::pi;
  const double gx = rng.uniform(-0.4, 0.4), gy = rng.uniform(-0.4, 0.4);
  struct Grating { double fx, fy, phase, amp; };
  std::vector<Grating> gratings(3);
  for (auto& g : gratings) {
    const double angle = rng.uniform(0.0, kPi), freq = rng.uniform(0.05, 0.35);
    g = {freq * std::cos(angle), freq * std::sin(angle), rng.uniform(0.0, 2 * kPi), rng.uniform(0.04, 0.12)};
  }
  struct Rect { double y0, x0, y1, x1, v; };
  std::vector<Rect> rects(5);
  for (auto& r : rects) {
    const double y = rng.uniform(0, static_cast<double>(height)), x = rng.uniform(0, static_cast<double>(width));
    r = {y, x, y + rng.uniform(3, static_cast<double>(height) / 2), x + rng.uniform(3, static_cast<double>(width) / 2),
         rng.uniform(-0.25, 0.25)};
  }
  std::vector<double> band_gain(static_cast<std::size_t>(bands));
  for (auto& g : band_gain) g = rng.uniform(0.7, 1.0);
  Tensor<T> out({bands, height, width});
  for (std::int64_t i = 0; i < height; ++i)
    for (std::int64_t j = 0; j < width; ++j) {
      const double u = static_cast<double>(i) / static_cast<double>(height), v = static_cast<double>(j) / static_cast<double>(width);
      double base = 0.5 + gx * (v - 0.5) + gy * (u - 0.5);
      for (const auto& g : gratings) base += g.amp * std::sin(2 * kPi * (g.fx * j + g.fy * i) + g.phase);
      for (const auto& r : rects) {
        if (i >= r.y0 && i < r.y1 && j >= r.x0 && j < r.x1) base += r.v;
      }
      const double texture = 0.03 * (rng.uniform() - 0.5);
      for (std::int64_t c = 0; c < bands; ++c) {
        const double val = 0.5 + band_gain[static_cast<std::size_t>(c)] * (base - 0.5) + texture;
        out.at({c, i, j}) = static_cast<T>(std::clamp(val, 0.0, 1.0));
      }
    }
  return out;
}

#define SFGSR_INSTANTIATE(T)                                                                       \
  template Tensor<T> degrade(const Tensor<T>&, const DegradationConfig&, std::uint64_t);          \
  template std::vector<PatchPair<T>> extract_patch_pairs(const Tensor<T>&, const Tensor<T>&,      \
                                                         std::int64_t, std::int64_t, std::size_t, \
                                                         std::uint64_t);                          \
  template Tensor<T> synthetic_scene<T>(std::int64_t, std::int64_t, std::int64_t, std::uint64_t);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)

}  // namespace sfgsr
