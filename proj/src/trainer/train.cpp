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
#include <numeric>
#include <ostream>
#include <sstream>

#include "sfgsr/trainer.hpp"

namespace sfgsr {

namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C0000ULL;
constexpr std::uint64_t kNoiseStream = 0xD20F0000ULL;
const std::string kMomentPrefix1 = kOptimizerPrefix + "m.";
const std::string kMomentPrefix2 = kOptimizerPrefix + "v.";
const std::string kStepEntry = kOptimizerPrefix + "step";

template <typename T>
Tensor<T> stack(const std::vector<const Tensor<T>*>& items) {
  num::Shape shape = items.front()->shape();
  for (const auto* t : items) {
    if (t->shape() != shape) {
      throw ShapeError("training patches differ in shape: " + num::to_string(t->shape()) + " vs " +
                       num::to_string(shape));
    }
  }
  shape.insert(shape.begin(), static_cast<std::int64_t>(items.size()));
  std::vector<T> data;
  data.reserve(num::numel(shape));
  for (const auto* t : items) data.insert(data.end(), t->data().begin(), t->data().end());
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void clip_gradients(const std::vector<NamedParameter<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& np : params) {
    for (auto g : np.param->grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double k = max_norm / norm;
  for (const auto& np : params) {
    for (auto& g : np.param->grad.data()) g = static_cast<T>(static_cast<double>(g) * k);
  }
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step,
                                       std::int64_t batch_size, std::size_t n) {
  if (n == 0) throw ConfigError("empty data source");
  if (step < 0 || batch_size < 1) throw ConfigError("batch_indices: invalid step or batch size");
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  std::uint64_t cached_epoch = ~std::uint64_t(0);
  std::vector<std::size_t> perm(n);
  for (std::int64_t j = 0; j < batch_size; ++j) {
    const auto pos = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) +
                     static_cast<std::uint64_t>(j);
    const std::uint64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t(0));
      num::Rng rng(num::Rng::derive(seed ^ kBatchStream, epoch));
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

std::uint64_t step_noise_key(std::uint64_t seed, std::int64_t step) {
  return num::Rng::derive(seed ^ kNoiseStream, static_cast<std::uint64_t>(step));
}

template <typename T>
std::vector<HistoryRow> train(TrainState<T>& state, const std::vector<PatchPair<T>>& data,
                              const TrainConfig& config, std::int64_t stop_step,
                              const std::type_identity_t<CheckpointFn<T>>& on_checkpoint) {
  config.validate();
  if (data.empty()) throw ConfigError("empty data source");
  const std::int64_t stop = stop_step < 0 ? config.total_steps : stop_step;
  if (stop > config.total_steps || state.step > stop) {
    throw ConfigError("train: step range [" + std::to_string(state.step) + ", " +
                      std::to_string(stop) + ") outside the schedule of " +
                      std::to_string(config.total_steps) + " steps");
  }
  const auto params = named_parameters(state.model);
  const AdamWConfig adam{config.beta1, config.beta2, config.adam_eps, config.weight_decay};
  std::vector<HistoryRow> rows;
  for (std::int64_t step = state.step; step < stop; ++step) {
    const auto idx = batch_indices(config.seed, step, config.batch_size, data.size());
    std::vector<const Tensor<T>*> lrs, hrs;
    for (auto i : idx) {
      lrs.push_back(&data[i].lr);
      hrs.push_back(&data[i].hr);
    }
    const double lr = cosine_lr(step, config.total_steps, config.lr0, config.lr_min);
    Tape<T> tape;
    num::Rng noise(step_noise_key(config.seed, step));
    const RunMode mode{true, &noise};
    Var<T> sr = model_forward(tape.constant(stack(lrs)), state.model, mode);
    const LossBreakdown<T> loss = total_loss(sr, tape.constant(stack(hrs)), config.loss);
    const double total = static_cast<double>(loss.total.value()[0]);
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "non-finite loss " << total << " at step " << step << " on batch indices ["
          << join_indices(idx) << "] (l1 " << loss.l1 << ", ssim " << loss.ssim << ", edge "
          << loss.edge << ", freq " << loss.freq << ")";
      throw NonFiniteLossError(step, idx, msg.str());
    }
    for (const auto& np : params) np.param->zero_grad();
    tape.backward(loss.total);
    if (config.grad_clip > 0.0) clip_gradients(params, config.grad_clip);
    adamw_step(params, state.optim, lr, adam);
    state.step = step + 1;
    rows.push_back({step, lr, total, loss.l1, loss.ssim, loss.edge, loss.freq});
    if (on_checkpoint && config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0) {
      on_checkpoint(state);
    }
  }
  return rows;
}

template <typename T>
Checkpoint train_checkpoint(const TrainState<T>& state) {
  Checkpoint ckpt = model_checkpoint(state.model);
  for (const auto& [name, m] : state.optim.m) ckpt.entries.emplace(kMomentPrefix1 + name, m);
  for (const auto& [name, v] : state.optim.v) ckpt.entries.emplace(kMomentPrefix2 + name, v);
  // Two f64 counters, exact below 2^53.
  ckpt.entries.emplace(kStepEntry,
                       Tensor<double>({2}, std::vector<double>{double(state.step), double(state.optim.step)}));
  return ckpt;
}

template <typename T>
TrainState<T> train_state_from_checkpoint(const Checkpoint& ckpt) {
  TrainState<T> state{model_from_checkpoint<T>(ckpt), {}, 0};
  std::map<std::string, num::Shape> shapes;
  state.model.for_each_parameter(
      [&](const std::string& name, const Parameter<T>& p) { shapes.emplace(name, p.value.shape()); });
  std::vector<std::string> problems;
  bool have_step = false;
  for (const auto& [name, tensor] : ckpt.entries) {
    if (name.rfind(kOptimizerPrefix, 0) != 0) continue;
    if (name == kStepEntry) {
      const auto s = tensor_as<double>(tensor);
      if (s.size() != 2) throw FormatError("checkpoint entry optim.step must hold 2 values");
      state.step = static_cast<std::int64_t>(s[0]);
      state.optim.step = static_cast<std::int64_t>(s[1]);
      have_step = true;
      continue;
    }
    const bool first = name.rfind(kMomentPrefix1, 0) == 0;
    const bool second = name.rfind(kMomentPrefix2, 0) == 0;
    const std::string param = name.substr((first || second) ? kMomentPrefix1.size() : 0);
    auto it = shapes.find(param);
    if (!(first || second) || it == shapes.end()) {
      problems.push_back("unknown: " + name);
    } else if (it->second != shape_of(tensor)) {
      problems.push_back("shape mismatch: " + name);
    } else {
      (first ? state.optim.m : state.optim.v).emplace(param, tensor_as<T>(tensor));
    }
  }
  if (!have_step) problems.push_back("missing: " + kStepEntry);
  if (!problems.empty()) {
    std::string msg = "checkpoint optimizer state is invalid:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw FormatError(msg);
  }
  return state;
}

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << "step,lr,total,l1,ssim,edge,freq\n";
  for (const auto& r : rows) {
    os << r.step << ',' << format_double(r.lr) << ',' << format_double(r.total) << ','
       << format_double(r.l1) << ',' << format_double(r.ssim) << ',' << format_double(r.edge) << ','
       << format_double(r.freq) << '\n';
  }
}

template <typename T>
std::vector<PatchPair<T>> synthetic_patches(std::int64_t bands, std::size_t count,
                                            std::int64_t lr_patch, const DegradationConfig& deg,
                                            std::uint64_t seed) {
  deg.validate();
  if (lr_patch < 1) throw ConfigError("synthetic_patches: lr_patch must be >= 1");
  std::vector<PatchPair<T>> out;
  const auto hr_extent = deg.scale * lr_patch;
  for (std::size_t i = 0; i < count; ++i) {
    PatchPair<T> p;
    p.hr = synthetic_scene<T>(bands, hr_extent, hr_extent, num::Rng::derive(seed, i));
    p.lr = degrade(p.hr, deg, i);
    out.push_back(std::move(p));
  }
  return out;
}

template <typename T>
EvalMetrics evaluate_model(const Model<T>& model, const std::vector<PatchPair<T>>& data) {
  if (data.empty()) throw ConfigError("evaluate: empty data source");
  EvalMetrics m;
  for (const auto& p : data) {
    num::Shape s = p.lr.shape();
    s.insert(s.begin(), 1);
    const Tensor<T> sr = super_resolve(model, p.lr.reshaped(s)).reshaped(p.hr.shape());
    m.psnr += psnr(sr, p.hr);
    m.ssim += ssim_metric(sr, p.hr);
    m.mae += mae(sr, p.hr);
  }
  const double n = static_cast<double>(data.size());
  return {m.psnr / n, m.ssim / n, m.mae / n};
}

template <typename T>
EvalMetrics evaluate_bicubic(const std::vector<PatchPair<T>>& data, std::int64_t scale) {
  if (data.empty()) throw ConfigError("evaluate: empty data source");
  EvalMetrics m;
  for (const auto& p : data) {
    const Tensor<T> up = num::bicubic_resize(p.lr, p.lr.dim(1) * scale, p.lr.dim(2) * scale);
    m.psnr += psnr(up, p.hr);
    m.ssim += ssim_metric(up, p.hr);
    m.mae += mae(up, p.hr);
  }
  const double n = static_cast<double>(data.size());
  return {m.psnr / n, m.ssim / n, m.mae / n};
}

#define SFGSR_INSTANTIATE(T)                                                                    \
  template std::vector<HistoryRow> train(TrainState<T>&, const std::vector<PatchPair<T>>&,      \
                                         const TrainConfig&, std::int64_t,                        \
                                         const std::type_identity_t<CheckpointFn<T>>&);           \
  template Checkpoint train_checkpoint(const TrainState<T>&);                                    \
  template TrainState<T> train_state_from_checkpoint<T>(const Checkpoint&);                      \
  template std::vector<PatchPair<T>> synthetic_patches<T>(std::int64_t, std::size_t, std::int64_t, \
                                                          const DegradationConfig&, std::uint64_t); \
  template EvalMetrics evaluate_model(const Model<T>&, const std::vector<PatchPair<T>>&);        \
  template EvalMetrics evaluate_bicubic(const std::vector<PatchPair<T>>&, std::int64_t);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)
#undef SFGSR_INSTANTIATE

}  // namespace sfgsr
