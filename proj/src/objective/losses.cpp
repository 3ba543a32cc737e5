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

#include <cmath>
#include <optional>

#include "sfgsr/errors.hpp"
#include "sfgsr/objective.hpp"

namespace sfgsr {

namespace {

template <typename T>
void check_pair(const Var<T>& sr, const Var<T>& hr, const char* what) {
  if (sr.shape() != hr.shape()) {
    throw ShapeError(std::string(what) + ": sr " + num::to_string(sr.shape()) + " vs hr " +
                     num::to_string(hr.shape()));
  }
  if (sr.rank() != 4) throw ShapeError(std::string(what) + ": expected [B, b, H, W], got " + num::to_string(sr.shape()));
}

std::int64_t next_pow2(std::int64_t n) {
  std::int64_t p = 1;
  while (p < n) p *= 2;
  return p;
}

template <typename T>
Var<T> smoothed_modulus(const Var<T>& re, const Var<T>& im) {
  const T eps = static_cast<T>(kFreqEps);
  return num::sqrt(re * re + im * im + eps) + (-std::sqrt(eps));
}

}  // namespace

Tensor<double> ssim_window() {
  const auto r = kSsimWindow / 2;
  std::vector<double> g(static_cast<std::size_t>(kSsimWindow));
  double s = 0;
  for (std::int64_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i - r);
    s += g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
  }
  Tensor<double> w({kSsimWindow, kSsimWindow});
  for (std::int64_t i = 0; i < kSsimWindow; ++i)
    for (std::int64_t j = 0; j < kSsimWindow; ++j)
      w.at({i, j}) = g[static_cast<std::size_t>(i)] / s * g[static_cast<std::size_t>(j)] / s;
  return w;
}

void LossWeights::validate() const {
  if (l1 < 0 || ssim < 0 || edge < 0 || freq < 0) throw ConfigError("loss weights must be >= 0");
}

std::string LossWeights::label() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (on) s += (s.empty() ? "" : "+") + std::string(name);
  };
  add(enabled_l1(), "L1");
  add(enabled_ssim(), "SSIM");
  add(enabled_edge(), "Edge");
  add(enabled_freq(), "Freq");
  return s.empty() ? "none" : s;
}

std::vector<std::string> LossWeights::keys(const std::string& p) {
  return {p + "l1", p + "ssim", p + "edge", p + "freq", p + "freq_pad", p + "freq_amplitude"};
}

void LossWeights::write(KeyValues& kv, const std::string& p) const {
  kv.set(p + "l1", format_double(use_l1 ? l1 : 0.0));
  kv.set(p + "ssim", format_double(use_ssim ? ssim : 0.0));
  kv.set(p + "edge", format_double(use_edge ? edge : 0.0));
  kv.set(p + "freq", format_double(use_freq ? freq : 0.0));
  kv.set(p + "freq_pad", freq_options.pad_to_pow2 ? "true" : "false");
  kv.set(p + "freq_amplitude", freq_options.amplitude ? "true" : "false");
}

LossWeights LossWeights::read(const KeyValues& kv, const std::string& p) {
  LossWeights w;
  if (kv.has(p + "l1")) w.l1 = kv.get_double(p + "l1");
  if (kv.has(p + "ssim")) w.ssim = kv.get_double(p + "ssim");
  if (kv.has(p + "edge")) w.edge = kv.get_double(p + "edge");
  if (kv.has(p + "freq")) w.freq = kv.get_double(p + "freq");
  if (kv.has(p + "freq_pad")) w.freq_options.pad_to_pow2 = kv.get_bool(p + "freq_pad");
  if (kv.has(p + "freq_amplitude")) w.freq_options.amplitude = kv.get_bool(p + "freq_amplitude");
  w.validate();
  return w;
}

template <typename T>
Var<T> l1_loss(const Var<T>& sr, const Var<T>& hr) {
  if (sr.shape() != hr.shape()) {
    throw ShapeError("l1_loss: sr " + num::to_string(sr.shape()) + " vs hr " + num::to_string(hr.shape()));
  }
  return num::mean(num::abs(sr - hr));
}

template <typename T>
Var<T> ssim(const Var<T>& sr, const Var<T>& hr) {
  check_pair(sr, hr, "ssim");
  if (sr.dim(2) < kSsimWindow || sr.dim(3) < kSsimWindow) {
    throw ConfigError("ssim: image " + num::to_string(sr.shape()) + " is smaller than the " +
                      std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  }
  const Tensor<T> win = ssim_window().cast<T>();
  const T c1 = static_cast<T>(kSsimK1 * kSsimK1), c2 = static_cast<T>(kSsimK2 * kSsimK2);
  auto filt = [&](const Var<T>& v) { return num::filter2d_valid(v, win); };
  Var<T> mx = filt(sr), my = filt(hr);
  Var<T> mxx = mx * mx, myy = my * my, mxy = mx * my;
  Var<T> sxx = filt(sr * sr) - mxx, syy = filt(hr * hr) - myy, sxy = filt(sr * hr) - mxy;
  Var<T> num_ = (mxy * T(2) + c1) * (sxy * T(2) + c2);
  Var<T> den = (mxx + myy + c1) * (sxx + syy + c2);
  return num::mean(num_ / den);
}

template <typename T>
Var<T> ssim_loss(const Var<T>& sr, const Var<T>& hr) {
  return ssim(sr, hr) * T(-1) + T(1);
}

template <typename T>
Var<T> edge_loss(const Var<T>& sr, const Var<T>& hr) {
  check_pair(sr, hr, "edge_loss");
  Var<T> gx = num::forward_diff(sr, 3) - num::forward_diff(hr, 3);
  Var<T> gy = num::forward_diff(sr, 2) - num::forward_diff(hr, 2);
  return num::mean(num::abs(gx)) + num::mean(num::abs(gy));
}

template <typename T>
Var<T> freq_loss(const Var<T>& sr, const Var<T>& hr, const FreqOptions& opts) {
  check_pair(sr, hr, "freq_loss");
  Var<T> a = sr, b = hr;
  const auto H = sr.dim(2), W = sr.dim(3);
  if (opts.pad_to_pow2 && (!num::is_power_of_two(H) || !num::is_power_of_two(W))) {
    a = num::pad_reflect(a, next_pow2(H) - H, next_pow2(W) - W);
    b = num::pad_reflect(b, next_pow2(H) - H, next_pow2(W) - W);
  }
  if (!opts.amplitude) {
    auto [re, im] = num::dft2(a - b);
    return num::mean(smoothed_modulus(re, im));
  }
  auto [ra, ia] = num::dft2(a);
  auto [rb, ib] = num::dft2(b);
  Var<T> diff = smoothed_modulus(ra, ia) - smoothed_modulus(rb, ib);
  Var<T> zero = diff.tape().constant(Tensor<T>(diff.shape()));
  return num::mean(smoothed_modulus(diff, zero));
}

template <typename T>
LossBreakdown<T> total_loss(const Var<T>& sr, const Var<T>& hr, const LossWeights& w) {
  w.validate();
  LossBreakdown<T> out;
  std::optional<Var<T>> total;
  auto accumulate = [&](const Var<T>& term, double weight, double& slot) {
    slot = static_cast<double>(term.value()[0]);
    Var<T> weighted = term * static_cast<T>(weight);
    total = total ? *total + weighted : weighted;
  };
  if (w.enabled_l1()) accumulate(l1_loss(sr, hr), w.l1, out.l1);
  if (w.enabled_ssim()) accumulate(ssim_loss(sr, hr), w.ssim, out.ssim);
  if (w.enabled_edge()) accumulate(edge_loss(sr, hr), w.edge, out.edge);
  if (w.enabled_freq()) accumulate(freq_loss(sr, hr, w.freq_options), w.freq, out.freq);
  if (!total) throw ConfigError("total_loss: every loss term is disabled");
  out.total = *total;
  return out;
}

#define SFGSR_INSTANTIATE(T)                                                       \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&);                          \
  template Var<T> ssim(const Var<T>&, const Var<T>&);                             \
  template Var<T> ssim_loss(const Var<T>&, const Var<T>&);                        \
  template Var<T> edge_loss(const Var<T>&, const Var<T>&);                        \
  template Var<T> freq_loss(const Var<T>&, const Var<T>&, const FreqOptions&);    \
  template LossBreakdown<T> total_loss(const Var<T>&, const Var<T>&, const LossWeights&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)

}  // namespace sfgsr
