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
#include <cstdio>
#include <ostream>

#include "sfgsr/trainer.hpp"

namespace sfgsr {

namespace {

LossWeights only(bool l1, bool ssim, bool edge, bool freq) {
  LossWeights w;
  if (!l1) w.l1 = 0.0;
  if (!ssim) w.ssim = 0.0;
  if (!edge) w.edge = 0.0;
  if (!freq) w.freq = 0.0;
  return w;
}

}  // namespace

std::vector<AblationSetting> ablation_grid() {
  return {
      {"FFN+L1", FfnKind::kBaseline, only(true, false, false, false)},
      {"FFN+all", FfnKind::kBaseline, only(true, true, true, true)},
      {"SFG+L1", FfnKind::kSfg, only(true, false, false, false)},
      {"SFG+L1/SSIM", FfnKind::kSfg, only(true, true, false, false)},
      {"SFG+all", FfnKind::kSfg, only(true, true, true, true)},
  };
}

template <typename T>
std::vector<AblationResult> run_ablation(const ModelConfig& base, const TrainConfig& train_config,
                                         const std::vector<PatchPair<T>>& train_data,
                                         const std::vector<PatchPair<T>>& eval_data) {
  std::vector<AblationResult> out;
  for (const auto& setting : ablation_grid()) {
    ModelConfig mc = base;
    mc.ffn = setting.ffn;
    TrainConfig tc = train_config;
    tc.loss = setting.loss;
    TrainState<T> state{build_model<T>(mc), {}, 0};
    const auto history = train(state, train_data, tc);
    AblationResult r;
    r.setting = setting;
    r.params = count_params(state.model);
    r.initial_loss = history.front().total;
    r.final_loss = history.back().total;
    r.metrics = evaluate_model(state.model, eval_data);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_ablation_table(const std::vector<AblationResult>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-8s %-18s %9s %11s %11s %9s %8s %9s\n", "setting", "ffn",
                "loss", "params", "loss@0", "loss@end", "PSNR", "SSIM", "MAE");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %-8s %-18s %9lld %11.6f %11.6f %9.4f %8.5f %9.6f\n",
                  r.setting.name.c_str(), to_string(r.setting.ffn).c_str(),
                  r.setting.loss.label().c_str(), static_cast<long long>(r.params), r.initial_loss,
                  r.final_loss, r.metrics.psnr, r.metrics.ssim, r.metrics.mae);
    out += line;
  }
  return out;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationResult>& rows) {
  os << "setting,ffn,loss,params,initial_loss,final_loss,psnr,ssim,mae\n";
  for (const auto& r : rows) {
    os << r.setting.name << ',' << to_string(r.setting.ffn) << ',' << r.setting.loss.label() << ','
       << r.params << ',' << format_double(r.initial_loss) << ',' << format_double(r.final_loss)
       << ',' << format_double(r.metrics.psnr) << ',' << format_double(r.metrics.ssim) << ','
       << format_double(r.metrics.mae) << '\n';
  }
}

#define SFGSR_INSTANTIATE(T)                                                                     \
  template std::vector<AblationResult> run_ablation(const ModelConfig&, const TrainConfig&,      \
                                                    const std::vector<PatchPair<T>>&,            \
                                                    const std::vector<PatchPair<T>>&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)
#undef SFGSR_INSTANTIATE

}  // namespace sfgsr
