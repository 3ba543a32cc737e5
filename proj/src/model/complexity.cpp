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

#include "sfgsr/model.hpp"

namespace sfgsr {

namespace {

void add(std::vector<CostItem>& items, const std::string& name, double v) {
  for (auto& it : items) {
    if (it.name == name) {
      it.value += v;
      return;
    }
  }
  items.push_back({name, v});
}

}  // namespace

double conv_flops(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t h, std::int64_t w) {
  return 2.0 * static_cast<double>(k * k) * static_cast<double>(cin) * static_cast<double>(cout) *
         static_cast<double>(h) * static_cast<double>(w);
}

ComplexityReport estimate_complexity(const ModelConfig& cfg, std::int64_t input_h, std::int64_t input_w) {
  cfg.validate();
  ComplexityReport r;
  r.input_h = input_h;
  r.input_w = input_w;
  const double C = static_cast<double>(cfg.embed_dim), F = static_cast<double>(cfg.upsample_features);
  const double b = static_cast<double>(cfg.bands);
  const auto win = cfg.window;
  const auto Hp = (input_h + win - 1) / win * win, Wp = (input_w + win - 1) / win * win;
  const double N = static_cast<double>(Hp * Wp), n = static_cast<double>(win * win);
  const double Ch = static_cast<double>(ffn_hidden_dim(cfg.embed_dim, cfg.mlp_ratio));
  const double Cg = static_cast<double>(ffn_gate_dim(ffn_hidden_dim(cfg.embed_dim, cfg.mlp_ratio), cfg.gate_rho));
  const double k2 = static_cast<double>(cfg.blur_k * cfg.blur_k);
  const double offsets = static_cast<double>((2 * win - 1) * (2 * win - 1));
  const double hid = static_cast<double>(cfg.bias_hidden);

  auto& P = r.param_breakdown;
  auto& Fl = r.flop_breakdown;
  add(P, "embed", 9 * b * C + C + 2 * C);
  add(Fl, "embed", conv_flops(3, cfg.bands, cfg.embed_dim, Hp, Wp));
  for (std::size_t s = 0; s < cfg.depths.size(); ++s) {
    const double h = static_cast<double>(cfg.heads[s]);
    for (std::int64_t i = 0; i < cfg.depths[s]; ++i) {
      const double bias_params = cfg.bias_mode == PositionBias::kContinuous ? 3 * hid + hid * h : offsets * h;
      add(P, "attention", 3 * C * C + 2 * C + C * C + C + h + bias_params);
      add(P, "norms", 4 * C);
      add(P, "ffn", 2 * C * Ch + Ch + C);
      add(Fl, "attention", 2 * N * C * 3 * C + 2 * (2 * N * n * C) + 2 * N * C * C);
      if (cfg.bias_mode == PositionBias::kContinuous) add(Fl, "position_bias", 2 * offsets * (2 * hid + hid * h));
      add(Fl, "ffn", 2 * (2 * N * C * Ch));
      if (cfg.ffn == FfnKind::kSfg) {
        add(P, "sfg_branch", Ch * k2 + 10 * Ch + 2 * Ch * Cg + Cg + Ch);
        add(Fl, "sfg_branch", 2 * N * Ch * k2 + 2 * N * Ch * 9 + 2 * (2 * N * Ch * Cg));
      }
    }
    add(P, "stage_convs", 9 * C * C + C);
    add(Fl, "stage_convs", conv_flops(3, cfg.embed_dim, cfg.embed_dim, Hp, Wp));
  }
  add(P, "body", 2 * C + 9 * C * C + C);
  add(Fl, "body", conv_flops(3, cfg.embed_dim, cfg.embed_dim, Hp, Wp));
  add(P, "head", 9 * C * F + F);
  add(Fl, "head", conv_flops(3, cfg.embed_dim, cfg.upsample_features, Hp, Wp));
  auto h = Hp, w = Wp;
  for (std::int64_t s = cfg.scale; s > 1; s /= 2) {
    add(P, "head", 36 * F * F + 4 * F);
    add(Fl, "head", conv_flops(3, cfg.upsample_features, 4 * cfg.upsample_features, h, w));
    h *= 2;
    w *= 2;
  }
  add(P, "head", 9 * F * b + b);
  add(Fl, "head", conv_flops(3, cfg.upsample_features, cfg.bands, h, w));
  for (const auto& it : P) r.params += static_cast<std::int64_t>(it.value);
  for (const auto& it : Fl) r.flops += it.value;
  return r;
}

}  // namespace sfgsr
