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

#include "sfgsr/swin.hpp"

#include <cmath>
#include <type_traits>

namespace sfgsr {

namespace {

template <typename T>
Parameter<T> trunc_normal(num::Shape shape, num::Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(0.02));
  return Parameter<T>(std::move(t));
}

template <typename T>
Parameter<T> filled(num::Shape shape, double v) {
  return Parameter<T>(Tensor<T>(std::move(shape), static_cast<T>(v)));
}

void check_window_grid(const num::Shape& s, std::int64_t window, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + ": expected [B, H, W, C], got " + num::to_string(s));
  if (window < 1 || s[1] % window != 0 || s[2] % window != 0) {
    throw ShapeError(std::string(what) + ": " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                     " is not divisible by window " + std::to_string(window));
  }
}

template <typename T>
Var<T> stochastic_depth(const Var<T>& branch, double rate, const RunMode& mode) {
  if (!mode.training || rate <= 0.0) return branch;
  if (mode.rng == nullptr) throw UsageError("drop path in training mode needs an Rng");
  return num::drop_path(branch, rate, *mode.rng);
}

}  // namespace

template <typename T>
SwinBlockParams<T> swin_block_init(const SwinBlockSpec& spec, std::uint64_t seed) {
  const auto C = spec.channels;
  if (C < 1 || spec.heads < 1 || C % spec.heads != 0) {
    throw ConfigError("swin block: channels " + std::to_string(C) + " not divisible by heads " +
                      std::to_string(spec.heads));
  }
  if (spec.window < 1) throw ConfigError("swin block: window must be >= 1");
  if (spec.shift != 0 && spec.shift != spec.window / 2) {
    throw ConfigError("swin block: shift must be 0 or window/2, got " + std::to_string(spec.shift));
  }
  if (spec.drop_path < 0.0 || spec.drop_path > 1.0) throw ConfigError("swin block: drop_path outside [0, 1]");
  if (spec.bias_hidden < 1) throw ConfigError("swin block: position-bias hidden width must be >= 1");

  num::Rng rng(num::Rng::derive(seed, 0));
  SwinBlockParams<T> p;
  p.heads = spec.heads;
  p.window = spec.window;
  p.shift = spec.shift;
  p.bias_mode = spec.bias_mode;
  p.drop_path = spec.drop_path;
  p.qkv_w = trunc_normal<T>({C, 3 * C}, rng);
  p.q_bias = filled<T>({C}, 0.0);
  p.v_bias = filled<T>({C}, 0.0);
  p.proj_w = trunc_normal<T>({C, C}, rng);
  p.proj_b = filled<T>({C}, 0.0);
  p.logit_scale = filled<T>({spec.heads}, std::log(10.0));
  const auto offsets = (2 * spec.window - 1) * (2 * spec.window - 1);
  if (spec.bias_mode == PositionBias::kContinuous) {
    p.cpb1_w = trunc_normal<T>({2, spec.bias_hidden}, rng);
    p.cpb1_b = filled<T>({spec.bias_hidden}, 0.0);
    p.cpb2_w = trunc_normal<T>({spec.bias_hidden, spec.heads}, rng);
  } else {
    p.bias_table = trunc_normal<T>({offsets, spec.heads}, rng);
  }
  p.ln1_g = filled<T>({C}, 1.0);
  p.ln1_b = filled<T>({C}, 0.0);
  p.ln2_g = filled<T>({C}, 1.0);
  p.ln2_b = filled<T>({C}, 0.0);
  const auto ffn_seed = num::Rng::derive(seed, 1);
  if (spec.ffn == FfnKind::kSfg) {
    p.ffn = sfg_ffn_init<T>(C, spec.mlp_ratio, spec.blur_k, spec.gate_rho, ffn_seed, spec.dropout);
  } else {
    p.ffn = baseline_mlp_init<T>(C, spec.mlp_ratio, ffn_seed, spec.dropout);
  }
  return p;
}

template <typename T>
Var<T> window_partition(const Var<T>& x, std::int64_t window) {
  check_window_grid(x.shape(), window, "window_partition");
  const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Var<T> t = num::reshape(x, {B, H / window, window, W / window, window, C});
  t = num::permute(t, {0, 1, 3, 2, 4, 5});
  return num::reshape(t, {B * (H / window) * (W / window), window * window, C});
}

template <typename T>
Var<T> window_reverse(const Var<T>& windows, std::int64_t window, std::int64_t height,
                      std::int64_t width) {
  if (window < 1 || height % window != 0 || width % window != 0) {
    throw ShapeError("window_reverse: " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by window " + std::to_string(window));
  }
  const auto per_image = (height / window) * (width / window);
  if (windows.rank() != 3 || windows.dim(1) != window * window || windows.dim(0) % per_image != 0) {
    throw ShapeError("window_reverse: windows " + num::to_string(windows.shape()) + " do not tile " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const auto B = windows.dim(0) / per_image, C = windows.dim(2);
  Var<T> t = num::reshape(windows, {B, height / window, width / window, window, window, C});
  t = num::permute(t, {0, 1, 3, 2, 4, 5});
  return num::reshape(t, {B, height, width, C});
}

template <typename T>
Var<T> cyclic_shift(const Var<T>& x, std::int64_t shift) {
  if (x.rank() != 4) throw ShapeError("cyclic_shift: expected [B, H, W, C], got " + num::to_string(x.shape()));
  if (shift == 0) return x;
  return num::roll(num::roll(x, 1, -shift), 2, -shift);
}

template <typename T>
Tensor<T> attention_mask(std::int64_t height, std::int64_t width, std::int64_t window,
                         std::int64_t shift) {
  check_window_grid({1, height, width, 1}, window, "attention_mask");
  const auto nh = height / window, nw = width / window, n = window * window;
  Tensor<T> mask({nh * nw, n, n});
  if (shift == 0) return mask;
  // Region id per pixel: 3 bands per axis split at extent - window and extent - shift.
  auto band = [&](std::int64_t i, std::int64_t extent) {
    return i < extent - window ? 0 : (i < extent - shift ? 1 : 2);
  };
  std::vector<int> region(static_cast<std::size_t>(n));
  for (std::int64_t wy = 0; wy < nh; ++wy)
    for (std::int64_t wx = 0; wx < nw; ++wx) {
      for (std::int64_t i = 0; i < window; ++i)
        for (std::int64_t j = 0; j < window; ++j)
          region[static_cast<std::size_t>(i * window + j)] =
              band(wy * window + i, height) * 3 + band(wx * window + j, width);
      T* m = mask.data().data() + (wy * nw + wx) * n * n;
      for (std::int64_t a = 0; a < n; ++a)
        for (std::int64_t b = 0; b < n; ++b)
          m[a * n + b] = region[static_cast<std::size_t>(a)] == region[static_cast<std::size_t>(b)]
                             ? T(0)
                             : static_cast<T>(kMaskLogit);
    }
  return mask;
}

std::vector<std::int64_t> relative_position_index(std::int64_t window) {
  const auto n = window * window, span = 2 * window - 1;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n * n));
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t b = 0; b < n; ++b) {
      const auto dy = a / window - b / window + window - 1;
      const auto dx = a % window - b % window + window - 1;
      idx[static_cast<std::size_t>(a * n + b)] = dy * span + dx;
    }
  return idx;
}

template <typename T>
Tensor<T> relative_coords_table(std::int64_t window) {
  const auto span = 2 * window - 1;
  Tensor<T> table({span * span, 2});
  if (window == 1) return table;
  auto squash = [&](std::int64_t d) {
    const double v = 8.0 * static_cast<double>(d) / static_cast<double>(window - 1);
    return static_cast<T>((v > 0) - (v < 0)) * static_cast<T>(std::log2(std::abs(v) + 1.0) / 3.0);
  };
  for (std::int64_t i = 0; i < span; ++i)
    for (std::int64_t j = 0; j < span; ++j) {
      table.at({i * span + j, 0}) = squash(i - (window - 1));
      table.at({i * span + j, 1}) = squash(j - (window - 1));
    }
  return table;
}

template <typename T>
Var<T> position_bias(Tape<T>& tape, const SwinBlockParams<T>& p) {
  const auto n = p.window * p.window;
  const auto idx = relative_position_index(p.window);
  Var<T> per_offset;
  if (p.bias_mode == PositionBias::kContinuous) {
    Var<T> coords = tape.constant(relative_coords_table<T>(p.window));
    Var<T> hidden = num::relu(num::linear(coords, tape.parameter(p.cpb1_w), tape.parameter(p.cpb1_b)));
    per_offset = num::linear(hidden, tape.parameter(p.cpb2_w));
  } else {
    per_offset = tape.parameter(p.bias_table);
  }
  Var<T> b = num::reshape(num::permute(num::take_rows(per_offset, idx), {1, 0}), {p.heads, n, n});
  if (p.bias_mode == PositionBias::kContinuous) b = num::sigmoid(b) * T(16);
  return b;
}

template <typename T>
Var<T> wmsa_forward(const Var<T>& tokens, const SwinBlockParams<T>& p, const Tensor<T>& mask,
                    Tensor<T>* weights) {
  const auto C = p.channels(), h = p.heads, n = p.window * p.window;
  if (C % h != 0) throw ConfigError("wmsa: channels not divisible by heads");
  if (tokens.rank() != 3 || tokens.dim(1) != n || tokens.dim(2) != C) {
    throw ShapeError("wmsa: tokens " + num::to_string(tokens.shape()) + " do not match window " +
                     std::to_string(p.window) + " and " + std::to_string(C) + " channels");
  }
  Tape<T>& tape = tokens.tape();
  const auto nwin = tokens.dim(0), d = C / h;
  Var<T> qkv_bias = num::concat<T>(
      {tape.parameter(p.q_bias), tape.constant(Tensor<T>({C})), tape.parameter(p.v_bias)}, 0);
  Var<T> qkv = num::linear(tokens, tape.parameter(p.qkv_w), qkv_bias);
  qkv = num::permute(num::reshape(qkv, {nwin, n, 3, h, d}), {2, 0, 3, 1, 4});
  auto part = [&](std::int64_t i) { return num::reshape(num::narrow(qkv, 0, i, 1), {nwin, h, n, d}); };
  Var<T> q = num::normalize_last(part(0), T(1e-6));
  Var<T> k = num::normalize_last(part(1), T(1e-6));
  Var<T> v = part(2);

  Var<T> scale = num::exp(num::clamp_max(tape.parameter(p.logit_scale), static_cast<T>(kMaxLogitScale)));
  Var<T> logits = num::bmm(q, k, true) * num::reshape(scale, {h, 1, 1});
  logits = logits + position_bias(tape, p);
  if (!mask.empty()) {
    const auto nw = mask.dim(0);
    if (mask.shape() != num::Shape{nw, n, n} || nwin % nw != 0) {
      throw ShapeError("wmsa: mask " + num::to_string(mask.shape()) + " does not fit " +
                       std::to_string(nwin) + " windows");
    }
    logits = num::reshape(logits, {nwin / nw, nw, h, n, n}) +
             tape.constant(mask.reshaped({1, nw, 1, n, n}));
    logits = num::reshape(logits, {nwin, h, n, n});
  }
  Var<T> attn = num::softmax(logits, 3);
  if (weights != nullptr) *weights = attn.value();
  Var<T> out = num::reshape(num::permute(num::bmm(attn, v), {0, 2, 1, 3}), {nwin, n, C});
  return num::linear(out, tape.parameter(p.proj_w), tape.parameter(p.proj_b));
}

template <typename T>
Var<T> swin_block_forward(const Var<T>& x, const SwinBlockParams<T>& p, std::int64_t height,
                          std::int64_t width, const RunMode& mode) {
  const auto C = p.channels();
  if (x.rank() != 3 || x.dim(1) != height * width || x.dim(2) != C) {
    throw ShapeError("swin block: tokens " + num::to_string(x.shape()) + " do not match " +
                     std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(C));
  }
  Tape<T>& tape = x.tape();
  const auto B = x.dim(0);
  Var<T> grid = cyclic_shift(num::reshape(x, {B, height, width, C}), p.shift);
  const Tensor<T> mask = p.shift > 0 ? attention_mask<T>(height, width, p.window, p.shift) : Tensor<T>();
  Var<T> attn = wmsa_forward(window_partition(grid, p.window), p, mask);
  attn = cyclic_shift(window_reverse(attn, p.window, height, width), -p.shift);
  attn = num::reshape(attn, {B, height * width, C});
  Var<T> x1 = x + stochastic_depth(
                      num::layernorm(attn, tape.parameter(p.ln1_g), tape.parameter(p.ln1_b)),
                      p.drop_path, mode);
  Var<T> f = std::visit(
      [&](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, SfgFfnParams<T>>) {
          return sfg_ffn_forward(x1, m, height, width, mode);
        } else {
          return baseline_mlp_forward(x1, m, mode);
        }
      },
      p.ffn);
  return x1 + stochastic_depth(num::layernorm(f, tape.parameter(p.ln2_g), tape.parameter(p.ln2_b)),
                               p.drop_path, mode);
}

#define SFGSR_INSTANTIATE(T)                                                                    \
  template SwinBlockParams<T> swin_block_init<T>(const SwinBlockSpec&, std::uint64_t);         \
  template Var<T> window_partition(const Var<T>&, std::int64_t);                               \
  template Var<T> window_reverse(const Var<T>&, std::int64_t, std::int64_t, std::int64_t);     \
  template Var<T> cyclic_shift(const Var<T>&, std::int64_t);                                   \
  template Tensor<T> attention_mask<T>(std::int64_t, std::int64_t, std::int64_t, std::int64_t); \
  template Tensor<T> relative_coords_table<T>(std::int64_t);                                   \
  template Var<T> position_bias(Tape<T>&, const SwinBlockParams<T>&);                          \
  template Var<T> wmsa_forward(const Var<T>&, const SwinBlockParams<T>&, const Tensor<T>&,     \
                               Tensor<T>*);                                                    \
  template Var<T> swin_block_forward(const Var<T>&, const SwinBlockParams<T>&, std::int64_t,   \
                                     std::int64_t, const RunMode&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)

}  // namespace sfgsr
