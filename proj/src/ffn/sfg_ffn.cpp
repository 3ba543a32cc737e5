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

#include "sfgsr/sfg_ffn.hpp"

#include <algorithm>
#include <cmath>

namespace sfgsr {

namespace {

template <typename T>
Parameter<T> trunc_normal(num::Shape shape, num::Rng& rng, double std = 0.02) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(std));
  return Parameter<T>(std::move(t));
}

template <typename T>
Parameter<T> zeros(num::Shape shape) {
  return Parameter<T>(Tensor<T>(std::move(shape)));
}

template <typename T>
Var<T> regularize(const Var<T>& y, double rate, const RunMode& mode) {
  if (!mode.training || rate <= 0.0) return y;
  if (mode.rng == nullptr) throw UsageError("dropout in training mode needs an Rng");
  return num::dropout(y, rate, *mode.rng);
}

void check_ratio(std::int64_t channels, double mlp_ratio) {
  if (channels < 1) throw ConfigError("ffn: channels must be >= 1");
  if (!(mlp_ratio > 0.0)) throw ConfigError("ffn: mlp_ratio must be > 0");
  if (ffn_hidden_dim(channels, mlp_ratio) < 1) throw ConfigError("ffn: hidden width rounds to 0");
}

}  // namespace

std::int64_t ffn_hidden_dim(std::int64_t channels, double mlp_ratio) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(channels) * mlp_ratio));
}

std::int64_t ffn_gate_dim(std::int64_t hidden, double rho) {
  return std::max<std::int64_t>(
      static_cast<std::int64_t>(std::floor(static_cast<double>(hidden) / rho)), 16);
}

template <typename T>
SfgFfnParams<T> sfg_ffn_init(std::int64_t channels, double mlp_ratio, std::int64_t blur_k,
                             double rho, std::uint64_t seed, double dropout) {
  check_ratio(channels, mlp_ratio);
  if (blur_k < 1 || blur_k % 2 == 0) {
    throw ConfigError("sfg_ffn: blur kernel size must be odd, got " + std::to_string(blur_k));
  }
  if (!(rho >= 1.0)) throw ConfigError("sfg_ffn: gate reduction rho must be >= 1");
  const auto ch = ffn_hidden_dim(channels, mlp_ratio);
  const auto cg = ffn_gate_dim(ch, rho);
  num::Rng rng(seed);
  SfgFfnParams<T> p;
  p.fc1_w = trunc_normal<T>({channels, ch}, rng);
  p.fc1_b = zeros<T>({ch});
  p.blur_w = Parameter<T>(Tensor<T>({ch, blur_k, blur_k}, static_cast<T>(1.0 / double(blur_k * blur_k))));
  p.refine_w = trunc_normal<T>({ch, 3, 3}, rng);
  p.refine_b = zeros<T>({ch});
  p.gate1_w = trunc_normal<T>({ch, cg}, rng);
  p.gate1_b = zeros<T>({cg});
  p.gate2_w = trunc_normal<T>({cg, ch}, rng);
  p.gate2_b = zeros<T>({ch});
  p.fc2_w = trunc_normal<T>({ch, channels}, rng);
  p.fc2_b = zeros<T>({channels});
  p.dropout = dropout;
  return p;
}

template <typename T>
BaselineMlpParams<T> baseline_mlp_init(std::int64_t channels, double mlp_ratio, std::uint64_t seed,
                                       double dropout) {
  check_ratio(channels, mlp_ratio);
  const auto ch = ffn_hidden_dim(channels, mlp_ratio);
  num::Rng rng(seed);
  BaselineMlpParams<T> p;
  p.fc1_w = trunc_normal<T>({channels, ch}, rng);
  p.fc1_b = zeros<T>({ch});
  p.fc2_w = trunc_normal<T>({ch, channels}, rng);
  p.fc2_b = zeros<T>({channels});
  p.dropout = dropout;
  return p;
}

template <typename T>
std::pair<Var<T>, Var<T>> decompose(const Var<T>& f, const Var<T>& blur_kernel) {
  Var<T> blurred = num::depthwise_conv2d(f, blur_kernel, num::PadMode::kReplicate);
  Var<T> high = f - blurred;
  // Re-deriving low from high makes low + high == f exact whenever |blurred| <= |f|.
  Var<T> low = f - high;
  return {low, high};
}

template <typename T>
Var<T> refine(const Var<T>& f_hf, const Var<T>& kernel, const Var<T>& bias) {
  return num::gelu(num::depthwise_conv2d(f_hf, kernel, num::PadMode::kZero, bias));
}

template <typename T>
Var<T> gate(const Var<T>& f_refined, const Var<T>& w1, const Var<T>& b1, const Var<T>& w2,
            const Var<T>& b2) {
  if (f_refined.rank() != 4) {
    throw ShapeError("gate expects a [B, C, H, W] map, got " + num::to_string(f_refined.shape()));
  }
  Var<T> pix = num::permute(f_refined, {0, 2, 3, 1});
  Var<T> g = num::sigmoid(num::linear(num::gelu(num::linear(pix, w1, b1)), w2, b2));
  return num::permute(g, {0, 3, 1, 2});
}

template <typename T>
Var<T> sfg_ffn_forward(const Var<T>& x, const SfgFfnParams<T>& p, std::int64_t height,
                       std::int64_t width, const RunMode& mode) {
  if (x.rank() != 3 || x.dim(1) != height * width) {
    throw ShapeError("sfg_ffn: tokens " + num::to_string(x.shape()) + " do not match " +
                     std::to_string(height) + "x" + std::to_string(width) + " spatial grid");
  }
  Tape<T>& tape = x.tape();
  const auto batch = x.dim(0), ch = p.hidden();
  Var<T> z = num::gelu(num::linear(x, tape.parameter(p.fc1_w), tape.parameter(p.fc1_b)));
  Var<T> f = num::permute(num::reshape(z, {batch, height, width, ch}), {0, 3, 1, 2});
  auto [low, high] = decompose(f, tape.parameter(p.blur_w));
  Var<T> detail = refine(high, tape.parameter(p.refine_w), tape.parameter(p.refine_b));
  Var<T> g = gate(detail, tape.parameter(p.gate1_w), tape.parameter(p.gate1_b),
                  tape.parameter(p.gate2_w), tape.parameter(p.gate2_b));
  Var<T> fused = f + g * detail;
  Var<T> tokens = num::reshape(num::permute(fused, {0, 2, 3, 1}), {batch, height * width, ch});
  Var<T> y = num::linear(tokens, tape.parameter(p.fc2_w), tape.parameter(p.fc2_b));
  return regularize(y, p.dropout, mode);
}

template <typename T>
Var<T> baseline_mlp_forward(const Var<T>& x, const BaselineMlpParams<T>& p, const RunMode& mode) {
  Tape<T>& tape = x.tape();
  Var<T> z = num::gelu(num::linear(x, tape.parameter(p.fc1_w), tape.parameter(p.fc1_b)));
  Var<T> y = num::linear(z, tape.parameter(p.fc2_w), tape.parameter(p.fc2_b));
  return regularize(y, p.dropout, mode);
}

#define SFGSR_INSTANTIATE(T)                                                                   \
  template SfgFfnParams<T> sfg_ffn_init<T>(std::int64_t, double, std::int64_t, double,         \
                                           std::uint64_t, double);                             \
  template BaselineMlpParams<T> baseline_mlp_init<T>(std::int64_t, double, std::uint64_t,      \
                                                     double);                                  \
  template std::pair<Var<T>, Var<T>> decompose(const Var<T>&, const Var<T>&);                  \
  template Var<T> refine(const Var<T>&, const Var<T>&, const Var<T>&);                         \
  template Var<T> gate(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,             \
                       const Var<T>&);                                                         \
  template Var<T> sfg_ffn_forward(const Var<T>&, const SfgFfnParams<T>&, std::int64_t,         \
                                  std::int64_t, const RunMode&);                               \
  template Var<T> baseline_mlp_forward(const Var<T>&, const BaselineMlpParams<T>&,             \
                                       const RunMode&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)
#undef SFGSR_INSTANTIATE

}  // namespace sfgsr
