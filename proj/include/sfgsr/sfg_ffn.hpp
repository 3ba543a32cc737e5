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
#include <utility>

#include "sfgsr/numerics/ops.hpp"

namespace sfgsr {

using num::Parameter;
using num::Tape;
using num::Tensor;
using num::Var;

// Forward-pass switches shared by every stochastic layer.
struct RunMode {
  bool training = false;
  num::Rng* rng = nullptr;  // required when training with nonzero drop rates
};

// C_h = floor(C * r)
std::int64_t ffn_hidden_dim(std::int64_t channels, double mlp_ratio);
// C_g = max(floor(C_h / rho), 16)
std::int64_t ffn_gate_dim(std::int64_t hidden, double rho);

// Spatial-frequency gated feed-forward network:
//   z      = GELU(x W1 + b1), reshaped to a [B, C_h, H, W] map F
//   F_LF   = depthwise k x k blur of F (replicate padding)
//   F_HF   = F - F_LF
//   F~_HF  = GELU(depthwise 3 x 3 conv of F_HF)
//   G      = sigmoid(W_g2 GELU(W_g1 F~_HF)) per pixel
//   out    = Dropout((F + G * F~_HF) W2 + b2)
template <typename T>
struct SfgFfnParams {
  Parameter<T> fc1_w;     // [C, C_h]
  Parameter<T> fc1_b;     // [C_h]
  Parameter<T> blur_w;    // [C_h, k, k]
  Parameter<T> refine_w;  // [C_h, 3, 3]
  Parameter<T> refine_b;  // [C_h]
  Parameter<T> gate1_w;   // [C_h, C_g]
  Parameter<T> gate1_b;   // [C_g]
  Parameter<T> gate2_w;   // [C_g, C_h]
  Parameter<T> gate2_b;   // [C_h]
  Parameter<T> fc2_w;     // [C_h, C]
  Parameter<T> fc2_b;     // [C]
  double dropout = 0.0;

  std::int64_t channels() const { return fc1_w.value.dim(0); }
  std::int64_t hidden() const { return fc1_w.value.dim(1); }
  std::int64_t gate_width() const { return gate1_w.value.dim(1); }
  std::int64_t blur_size() const { return blur_w.value.dim(1); }

  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) { visit(*this, prefix, f); }
  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) const { visit(*this, prefix, f); }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, const std::string& p, F& f) {
    f(p + "fc1.weight", s.fc1_w);
    f(p + "fc1.bias", s.fc1_b);
    f(p + "blur.weight", s.blur_w);
    f(p + "refine.weight", s.refine_w);
    f(p + "refine.bias", s.refine_b);
    f(p + "gate.fc1.weight", s.gate1_w);
    f(p + "gate.fc1.bias", s.gate1_b);
    f(p + "gate.fc2.weight", s.gate2_w);
    f(p + "gate.fc2.bias", s.gate2_b);
    f(p + "fc2.weight", s.fc2_w);
    f(p + "fc2.bias", s.fc2_b);
  }
};

// The standard two-layer MLP: Dropout(W2 GELU(W1 x + b1) + b2).
template <typename T>
struct BaselineMlpParams {
  Parameter<T> fc1_w;  // [C, C_h]
  Parameter<T> fc1_b;
  Parameter<T> fc2_w;  // [C_h, C]
  Parameter<T> fc2_b;
  double dropout = 0.0;

  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) { visit(*this, prefix, f); }
  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) const { visit(*this, prefix, f); }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, const std::string& p, F& f) {
    f(p + "fc1.weight", s.fc1_w);
    f(p + "fc1.bias", s.fc1_b);
    f(p + "fc2.weight", s.fc2_w);
    f(p + "fc2.bias", s.fc2_b);
  }
};

// Linear, refine and gate weights ~ truncated normal (std 0.02), biases zero,
// blur kernel uniform 1/k^2. Throws ConfigError on invalid hyperparameters.
template <typename T>
SfgFfnParams<T> sfg_ffn_init(std::int64_t channels, double mlp_ratio, std::int64_t blur_k,
                             double rho, std::uint64_t seed, double dropout = 0.0);

template <typename T>
BaselineMlpParams<T> baseline_mlp_init(std::int64_t channels, double mlp_ratio, std::uint64_t seed,
                                       double dropout = 0.0);

// Splits a [B, C_h, H, W] map into (low, high) with low + high == F.
template <typename T>
std::pair<Var<T>, Var<T>> decompose(const Var<T>& f, const Var<T>& blur_kernel);

template <typename T>
Var<T> refine(const Var<T>& f_hf, const Var<T>& kernel, const Var<T>& bias);

// Per-pixel bottleneck gate on a [B, C_h, H, W] map; values in (0, 1).
template <typename T>
Var<T> gate(const Var<T>& f_refined, const Var<T>& w1, const Var<T>& b1, const Var<T>& w2,
            const Var<T>& b2);

// x: [B, H*W, C] tokens in row-major spatial order.
template <typename T>
Var<T> sfg_ffn_forward(const Var<T>& x, const SfgFfnParams<T>& p, std::int64_t height,
                       std::int64_t width, const RunMode& mode = {});

template <typename T>
Var<T> baseline_mlp_forward(const Var<T>& x, const BaselineMlpParams<T>& p,
                            const RunMode& mode = {});

}  // namespace sfgsr
