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

#include "sfgsr/errors.hpp"
#include "sfgsr/model.hpp"

namespace sfgsr {

namespace {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
template <typename T>
std::pair<Parameter<T>, Parameter<T>> conv_init(std::int64_t cout, std::int64_t cin, num::Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
  Tensor<T> w({cout, cin, 3, 3}), b({cout});
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  for (auto& v : b.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return {Parameter<T>(std::move(w)), Parameter<T>(std::move(b))};
}

template <typename T>
Var<T> to_tokens(const Var<T>& img) {
  return num::reshape(num::permute(img, {0, 2, 3, 1}), {img.dim(0), img.dim(2) * img.dim(3), img.dim(1)});
}

template <typename T>
Var<T> to_image(const Var<T>& tokens, std::int64_t h, std::int64_t w) {
  return num::permute(num::reshape(tokens, {tokens.dim(0), h, w, tokens.dim(2)}), {0, 3, 1, 2});
}

}  // namespace

std::vector<double> input_mean(std::int64_t bands) {
  if (bands == 3) return {0.4488, 0.4371, 0.4040};
  return std::vector<double>(static_cast<std::size_t>(bands), 0.0);
}

template <typename T>
Model<T> build_model(const ModelConfig& config) {
  config.validate();
  const auto C = config.embed_dim, F = config.upsample_features;
  Model<T> m;
  m.config = config;
  num::Rng rng(num::Rng::derive(config.seed, 0));
  std::tie(m.embed_w, m.embed_b) = conv_init<T>(C, config.bands, rng);
  m.embed_norm_g = Parameter<T>(Tensor<T>({C}, T(1)));
  m.embed_norm_b = Parameter<T>(Tensor<T>({C}));
  const auto total = config.total_blocks();
  std::int64_t index = 0;
  for (std::size_t s = 0; s < config.depths.size(); ++s) {
    ResidualStage<T> stage;
    for (std::int64_t i = 0; i < config.depths[s]; ++i, ++index) {
      SwinBlockSpec spec;
      spec.channels = C;
      spec.heads = config.heads[s];
      spec.window = config.window;
      spec.shift = i % 2 == 0 ? 0 : config.window / 2;
      spec.mlp_ratio = config.mlp_ratio;
      spec.ffn = config.ffn;
      spec.blur_k = config.blur_k;
      spec.gate_rho = config.gate_rho;
      spec.dropout = config.dropout;
      spec.drop_path = total > 1 ? config.drop_path * static_cast<double>(index) / static_cast<double>(total - 1) : 0.0;
      spec.bias_mode = config.bias_mode;
      spec.bias_hidden = config.bias_hidden;
      stage.blocks.push_back(swin_block_init<T>(spec, num::Rng::derive(config.seed, 1000 + static_cast<std::uint64_t>(index))));
    }
    std::tie(stage.conv_w, stage.conv_b) = conv_init<T>(C, C, rng);
    m.stages.push_back(std::move(stage));
  }
  m.norm_g = Parameter<T>(Tensor<T>({C}, T(1)));
  m.norm_b = Parameter<T>(Tensor<T>({C}));
  std::tie(m.body_w, m.body_b) = conv_init<T>(C, C, rng);
  std::tie(m.pre_up_w, m.pre_up_b) = conv_init<T>(F, C, rng);
  for (std::int64_t s = config.scale; s > 1; s /= 2) {
    auto [w, b] = conv_init<T>(4 * F, F, rng);
    m.up_w.push_back(std::move(w));
    m.up_b.push_back(std::move(b));
  }
  std::tie(m.last_w, m.last_b) = conv_init<T>(config.bands, F, rng);
  return m;
}

template <typename T>
Var<T> model_forward(const Var<T>& lr, const Model<T>& model, const RunMode& mode) {
  const auto& cfg = model.config;
  if (lr.rank() != 4 || lr.dim(1) != cfg.bands) {
    throw ShapeError("model: input " + num::to_string(lr.shape()) + " does not have " +
                     std::to_string(cfg.bands) + " bands");
  }
  Tape<T>& tape = lr.tape();
  const auto H = lr.dim(2), W = lr.dim(3), w = cfg.window;
  const auto Hp = (H + w - 1) / w * w, Wp = (W + w - 1) / w * w;
  Tensor<T> mean({1, cfg.bands, 1, 1});
  const auto mu = input_mean(cfg.bands);
  for (std::int64_t c = 0; c < cfg.bands; ++c) mean[static_cast<std::size_t>(c)] = static_cast<T>(mu[static_cast<std::size_t>(c)]);
  Var<T> mean_v = tape.constant(mean);

  Var<T> x = lr - mean_v;
  if (Hp != H || Wp != W) x = num::pad_reflect(x, Hp - H, Wp - W);
  Var<T> shallow = num::conv2d(x, tape.parameter(model.embed_w), tape.parameter(model.embed_b));
  Var<T> tokens = num::layernorm(to_tokens(shallow), tape.parameter(model.embed_norm_g),
                                 tape.parameter(model.embed_norm_b));
  for (const auto& stage : model.stages) {
    Var<T> t = tokens;
    for (const auto& block : stage.blocks) t = swin_block_forward(t, block, Hp, Wp, mode);
    Var<T> conv = num::conv2d(to_image(t, Hp, Wp), tape.parameter(stage.conv_w), tape.parameter(stage.conv_b));
    tokens = tokens + to_tokens(conv);
  }
  tokens = num::layernorm(tokens, tape.parameter(model.norm_g), tape.parameter(model.norm_b));
  Var<T> deep = num::conv2d(to_image(tokens, Hp, Wp), tape.parameter(model.body_w), tape.parameter(model.body_b));
  Var<T> y = num::leaky_relu(
      num::conv2d(deep + shallow, tape.parameter(model.pre_up_w), tape.parameter(model.pre_up_b)), T(0.01));
  for (std::size_t i = 0; i < model.up_w.size(); ++i) {
    y = num::pixel_shuffle(num::conv2d(y, tape.parameter(model.up_w[i]), tape.parameter(model.up_b[i])), 2);
  }
  y = num::conv2d(y, tape.parameter(model.last_w), tape.parameter(model.last_b)) + mean_v;
  if (Hp != H || Wp != W) y = num::crop(y, cfg.scale * H, cfg.scale * W);
  return y;
}

template <typename T>
Tensor<T> super_resolve(const Model<T>& model, const Tensor<T>& lr) {
  Tape<T> tape(false);
  return model_forward(tape.constant(lr), model).value();
}

template <typename T>
std::int64_t count_params(const Model<T>& model) {
  std::int64_t n = 0;
  model.for_each_parameter([&](const std::string&, const Parameter<T>& p) {
    n += static_cast<std::int64_t>(p.value.size());
  });
  return n;
}

#define SFGSR_INSTANTIATE(T)                                                        \
  template Model<T> build_model<T>(const ModelConfig&);                            \
  template Var<T> model_forward(const Var<T>&, const Model<T>&, const RunMode&);   \
  template Tensor<T> super_resolve(const Model<T>&, const Tensor<T>&);             \
  template std::int64_t count_params(const Model<T>&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)

}  // namespace sfgsr
