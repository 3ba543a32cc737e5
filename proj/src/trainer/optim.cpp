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

#include <charconv>
#include <cmath>
#include <numbers>
#include <set>

#include "sfgsr/trainer.hpp"

namespace sfgsr {

namespace {

const char* const kTrainKeys[] = {"lr0",        "lr_min",      "weight_decay",     "beta1",
                                  "beta2",      "adam_eps",    "batch_size",       "total_steps",
                                  "seed",       "grad_clip",   "checkpoint_every"};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("train: lr0 must be > 0");
  if (!(lr_min >= 0.0) || lr_min > lr0) throw ConfigError("train: lr_min must lie in [0, lr0]");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be >= 0");
  loss.validate();
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("lr0", format_double(lr0));
  kv.set("lr_min", format_double(lr_min));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("beta1", format_double(beta1));
  kv.set("beta2", format_double(beta2));
  kv.set("adam_eps", format_double(adam_eps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("total_steps", std::to_string(total_steps));
  kv.set("seed", std::to_string(seed));
  kv.set("grad_clip", format_double(grad_clip));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  loss.write(kv, "loss.");
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  std::set<std::string> known(std::begin(kTrainKeys), std::end(kTrainKeys));
  for (auto& k : LossWeights::keys("loss.")) known.insert(k);
  kv.reject_unknown(known, "train config");
  TrainConfig c;
  if (kv.has("lr0")) c.lr0 = kv.get_double("lr0");
  if (kv.has("lr_min")) c.lr_min = kv.get_double("lr_min");
  if (kv.has("weight_decay")) c.weight_decay = kv.get_double("weight_decay");
  if (kv.has("beta1")) c.beta1 = kv.get_double("beta1");
  if (kv.has("beta2")) c.beta2 = kv.get_double("beta2");
  if (kv.has("adam_eps")) c.adam_eps = kv.get_double("adam_eps");
  if (kv.has("batch_size")) c.batch_size = kv.get_int("batch_size");
  if (kv.has("total_steps")) c.total_steps = kv.get_int("total_steps");
  if (kv.has("seed")) {
    const auto& s = kv.get("seed");
    const auto r = std::from_chars(s.data(), s.data() + s.size(), c.seed);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError("config key 'seed': expected an unsigned integer, got '" + s + "'");
    }
  }
  if (kv.has("grad_clip")) c.grad_clip = kv.get_double("grad_clip");
  if (kv.has("checkpoint_every")) c.checkpoint_every = kv.get_int("checkpoint_every");
  c.loss = LossWeights::read(kv, "loss.");
  c.validate();
  return c;
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min) {
  if (total_steps < 1) throw ConfigError("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  if (step == 0) return lr0;
  if (step == total_steps) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

bool applies_weight_decay(const std::string& name, const num::Shape& shape) {
  return shape.size() >= 2 && !ends_with(name, "bias_table");
}

template <typename T>
std::vector<NamedParameter<T>> named_parameters(Model<T>& model) {
  std::vector<NamedParameter<T>> out;
  model.for_each_parameter([&](const std::string& name, Parameter<T>& p) {
    out.push_back({name, &p, applies_weight_decay(name, p.value.shape())});
  });
  return out;
}

template <typename T>
void adamw_step(const std::vector<NamedParameter<T>>& params, OptimizerState<T>& state, double lr,
                const AdamWConfig& cfg) {
  for (const auto& np : params) {
    const auto& shape = np.param->value.shape();
    if (!np.param->grad.empty() && np.param->grad.shape() != shape) {
      throw ShapeError("adamw: gradient of " + np.name + " has shape " +
                       num::to_string(np.param->grad.shape()) + ", parameter " + num::to_string(shape));
    }
    for (auto* moments : {&state.m, &state.v}) {
      auto it = moments->find(np.name);
      if (it != moments->end() && it->second.shape() != shape) {
        throw ShapeError("adamw: stored moment of " + np.name + " has shape " +
                         num::to_string(it->second.shape()) + ", parameter " + num::to_string(shape));
      }
    }
  }
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& np : params) {
    Parameter<T>& p = *np.param;
    auto& m = state.m.try_emplace(np.name, p.value.shape()).first->second;
    auto& v = state.v.try_emplace(np.name, p.value.shape()).first->second;
    auto theta = p.value.data();
    auto md = m.data();
    auto vd = v.data();
    const bool has_grad = !p.grad.empty();
    const double shrink = np.decay ? 1.0 - lr * cfg.weight_decay : 1.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has_grad ? static_cast<double>(p.grad[i]) : 0.0;
      const double mi = cfg.beta1 * static_cast<double>(md[i]) + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * static_cast<double>(vd[i]) + (1.0 - cfg.beta2) * g * g;
      md[i] = static_cast<T>(mi);
      vd[i] = static_cast<T>(vi);
      double th = static_cast<double>(theta[i]) * shrink;
      th -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      theta[i] = static_cast<T>(th);
    }
  }
  state.step += 1;
}

#define SFGSR_INSTANTIATE(T)                                                               \
  template std::vector<NamedParameter<T>> named_parameters(Model<T>&);                     \
  template void adamw_step(const std::vector<NamedParameter<T>>&, OptimizerState<T>&, double, \
                           const AdamWConfig&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)
#undef SFGSR_INSTANTIATE

}  // namespace sfgsr
