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
#include <variant>
#include <vector>

#include "sfgsr/sfg_ffn.hpp"

namespace sfgsr {

enum class FfnKind { kSfg, kBaseline };
// kContinuous: 2-layer map from log-spaced relative coordinates to per-head bias.
// kTable: one learned bias per (relative offset, head).
enum class PositionBias { kContinuous, kTable };

inline constexpr double kMaxLogitScale = 4.605170185988092;  // ln(100)
inline constexpr double kMaskLogit = -100.0;

struct SwinBlockSpec {
  std::int64_t channels = 0;
  std::int64_t heads = 1;
  std::int64_t window = 8;
  std::int64_t shift = 0;  // 0 or window / 2
  double mlp_ratio = 2.0;
  FfnKind ffn = FfnKind::kSfg;
  std::int64_t blur_k = 5;
  double gate_rho = 8.0;
  double dropout = 0.0;
  double drop_path = 0.0;
  PositionBias bias_mode = PositionBias::kContinuous;
  std::int64_t bias_hidden = 512;
};

template <typename T>
struct SwinBlockParams {
  std::int64_t heads = 1;
  std::int64_t window = 8;
  std::int64_t shift = 0;
  PositionBias bias_mode = PositionBias::kContinuous;
  double drop_path = 0.0;

  Parameter<T> qkv_w;        // [C, 3C], no bias
  Parameter<T> q_bias;       // [C]
  Parameter<T> v_bias;       // [C]
  Parameter<T> proj_w;       // [C, C]
  Parameter<T> proj_b;       // [C]
  Parameter<T> logit_scale;  // [heads], log domain
  Parameter<T> cpb1_w;       // [2, hidden]        kContinuous
  Parameter<T> cpb1_b;       // [hidden]           kContinuous
  Parameter<T> cpb2_w;       // [hidden, heads]    kContinuous
  Parameter<T> bias_table;   // [(2w-1)^2, heads]  kTable
  Parameter<T> ln1_g, ln1_b, ln2_g, ln2_b;
  std::variant<SfgFfnParams<T>, BaselineMlpParams<T>> ffn;

  std::int64_t channels() const { return proj_w.value.dim(0); }

  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) { visit(*this, prefix, f); }
  template <typename F>
  void for_each_parameter(const std::string& prefix, F&& f) const { visit(*this, prefix, f); }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, const std::string& p, F& f) {
    f(p + "attn.qkv.weight", s.qkv_w);
    f(p + "attn.q_bias", s.q_bias);
    f(p + "attn.v_bias", s.v_bias);
    f(p + "attn.proj.weight", s.proj_w);
    f(p + "attn.proj.bias", s.proj_b);
    f(p + "attn.logit_scale", s.logit_scale);
    if (s.bias_mode == PositionBias::kContinuous) {
      f(p + "attn.cpb.fc1.weight", s.cpb1_w);
      f(p + "attn.cpb.fc1.bias", s.cpb1_b);
      f(p + "attn.cpb.fc2.weight", s.cpb2_w);
    } else {
      f(p + "attn.bias_table", s.bias_table);
    }
    f(p + "norm1.weight", s.ln1_g);
    f(p + "norm1.bias", s.ln1_b);
    f(p + "norm2.weight", s.ln2_g);
    f(p + "norm2.bias", s.ln2_b);
    std::visit([&](auto& m) { m.for_each_parameter(p + "ffn.", f); }, s.ffn);
  }
};

// Throws ConfigError on invalid head count, window or shift.
template <typename T>
SwinBlockParams<T> swin_block_init(const SwinBlockSpec& spec, std::uint64_t seed);

// [B, H, W, C] -> [B * nW, w * w, C]; windows in row-major order per image.
template <typename T>
Var<T> window_partition(const Var<T>& x, std::int64_t window);
template <typename T>
Var<T> window_reverse(const Var<T>& windows, std::int64_t window, std::int64_t height,
                      std::int64_t width);

// Toroidal roll of a [B, H, W, C] map by (-shift, -shift); negate to undo.
template <typename T>
Var<T> cyclic_shift(const Var<T>& x, std::int64_t shift);

// [nW, w*w, w*w] additive mask: 0 within a region, kMaskLogit across regions.
template <typename T>
Tensor<T> attention_mask(std::int64_t height, std::int64_t width, std::int64_t window,
                         std::int64_t shift);

// Flat [(w*w)^2] index into the (2w-1)^2 relative-offset table.
std::vector<std::int64_t> relative_position_index(std::int64_t window);
// [(2w-1)^2, 2] log-spaced relative coordinates in [-1, 1].
template <typename T>
Tensor<T> relative_coords_table(std::int64_t window);

// [heads, w*w, w*w] additive bias.
template <typename T>
Var<T> position_bias(Tape<T>& tape, const SwinBlockParams<T>& p);

// tokens: [nWin, w*w, C]. mask: empty or [nW, w*w, w*w] with nWin a multiple
// of nW. When `weights` is non-null it receives the [nWin, heads, N, N]
// attention probabilities.
template <typename T>
Var<T> wmsa_forward(const Var<T>& tokens, const SwinBlockParams<T>& p, const Tensor<T>& mask,
                    Tensor<T>* weights = nullptr);

// x: [B, H*W, C]; H and W multiples of the window.
// x' = x + DropPath(LN1(W-MSA(x))); out = x' + DropPath(LN2(FFN(x'))).
template <typename T>
Var<T> swin_block_forward(const Var<T>& x, const SwinBlockParams<T>& p, std::int64_t height,
                          std::int64_t width, const RunMode& mode = {});

}  // namespace sfgsr
