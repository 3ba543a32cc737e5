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
#include <vector>

#include "sfgsr/key_value.hpp"
#include "sfgsr/swin.hpp"

namespace sfgsr {

struct ModelConfig {
  std::int64_t scale = 2;
  std::int64_t bands = 3;
  std::int64_t embed_dim = 180;
  std::vector<std::int64_t> depths{6, 6, 6, 6, 6, 6};
  std::vector<std::int64_t> heads{6, 6, 6, 6, 6, 6};
  std::int64_t window = 8;
  double mlp_ratio = 2.0;
  FfnKind ffn = FfnKind::kSfg;
  std::int64_t blur_k = 5;
  double gate_rho = 8.0;
  double dropout = 0.0;
  double drop_path = 0.0;  // largest rate; block i of n gets drop_path * i / (n - 1)
  PositionBias bias_mode = PositionBias::kContinuous;
  std::int64_t bias_hidden = 512;
  std::int64_t upsample_features = 64;
  std::uint64_t seed = 42;

  static ModelConfig full();
  // C=16, depths [2,2], heads [2,2], w=8, learned bias table.
  static ModelConfig tiny();

  // Throws ConfigError naming the first failing field.
  void validate() const;
  std::int64_t total_blocks() const;

  KeyValues to_key_values() const;
  // Missing keys keep defaults; unknown keys throw ConfigError.
  static ModelConfig from_key_values(const KeyValues& kv);
  bool operator==(const ModelConfig&) const = default;
};

std::string to_string(FfnKind k);
FfnKind parse_ffn_kind(const std::string& s);
std::string to_string(PositionBias m);
PositionBias parse_position_bias(const std::string& s);

template <typename T>
struct ResidualStage {
  std::vector<SwinBlockParams<T>> blocks;
  Parameter<T> conv_w;  // [C, C, 3, 3]
  Parameter<T> conv_b;
};

template <typename T>
struct Model {
  ModelConfig config;
  Parameter<T> embed_w;  // [C, b, 3, 3]
  Parameter<T> embed_b;
  Parameter<T> embed_norm_g, embed_norm_b;
  std::vector<ResidualStage<T>> stages;
  Parameter<T> norm_g, norm_b;
  Parameter<T> body_w;  // [C, C, 3, 3]
  Parameter<T> body_b;
  Parameter<T> pre_up_w;  // [F, C, 3, 3]
  Parameter<T> pre_up_b;
  std::vector<Parameter<T>> up_w;  // log2(s) x [4F, F, 3, 3]
  std::vector<Parameter<T>> up_b;
  Parameter<T> last_w;  // [b, F, 3, 3]
  Parameter<T> last_b;

  template <typename F>
  void for_each_parameter(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each_parameter(F&& f) const { visit(*this, f); }

 private:
  template <typename Self, typename F>
  static void visit(Self& m, F& f) {
    f(std::string("embed.conv.weight"), m.embed_w);
    f(std::string("embed.conv.bias"), m.embed_b);
    f(std::string("embed.norm.weight"), m.embed_norm_g);
    f(std::string("embed.norm.bias"), m.embed_norm_b);
    for (std::size_t s = 0; s < m.stages.size(); ++s) {
      const std::string sp = "stages." + std::to_string(s) + ".";
      for (std::size_t b = 0; b < m.stages[s].blocks.size(); ++b) {
        m.stages[s].blocks[b].for_each_parameter(sp + "blocks." + std::to_string(b) + ".", f);
      }
      f(sp + "conv.weight", m.stages[s].conv_w);
      f(sp + "conv.bias", m.stages[s].conv_b);
    }
    f(std::string("norm.weight"), m.norm_g);
    f(std::string("norm.bias"), m.norm_b);
    f(std::string("body.conv.weight"), m.body_w);
    f(std::string("body.conv.bias"), m.body_b);
    f(std::string("head.pre.weight"), m.pre_up_w);
    f(std::string("head.pre.bias"), m.pre_up_b);
    for (std::size_t i = 0; i < m.up_w.size(); ++i) {
      f("head.up." + std::to_string(i) + ".weight", m.up_w[i]);
      f("head.up." + std::to_string(i) + ".bias", m.up_b[i]);
    }
    f(std::string("head.last.weight"), m.last_w);
    f(std::string("head.last.bias"), m.last_b);
  }
};

template <typename T>
Model<T> build_model(const ModelConfig& config);

// Per-band mean removed before the embedding and restored after the head.
std::vector<double> input_mean(std::int64_t bands);

// lr: [B, b, H, W] in [0, 1]; returns [B, b, sH, sW]. H and W need not be
// window multiples (reflect-padded, then cropped).
template <typename T>
Var<T> model_forward(const Var<T>& lr, const Model<T>& model, const RunMode& mode = {});

// Inference convenience on a non-recording tape.
template <typename T>
Tensor<T> super_resolve(const Model<T>& model, const Tensor<T>& lr);

template <typename T>
std::int64_t count_params(const Model<T>& model);

struct CostItem {
  std::string name;
  double value = 0.0;
};

struct ComplexityReport {
  std::int64_t params = 0;
  double flops = 0.0;  // 2 FLOPs per multiply-accumulate
  std::int64_t input_h = 64, input_w = 64;
  std::vector<CostItem> param_breakdown;
  std::vector<CostItem> flop_breakdown;
};

// Analytic counts from the configuration alone; convs, linears and the two
// attention matmuls are counted, normalizations and activations are not.
ComplexityReport estimate_complexity(const ModelConfig& config, std::int64_t input_h = 64,
                                     std::int64_t input_w = 64);

// 2 * k^2 * Cin * Cout * H * W for a same-padded conv.
double conv_flops(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t h, std::int64_t w);

}  // namespace sfgsr
