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
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "sfgsr/degrade.hpp"
#include "sfgsr/io.hpp"
#include "sfgsr/model.hpp"
#include "sfgsr/objective.hpp"

namespace sfgsr {

struct TrainConfig {
  double lr0 = 2e-4;
  double lr_min = 1e-6;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t batch_size = 4;
  std::int64_t total_steps = 200;
  std::uint64_t seed = 42;
  LossWeights loss;
  std::int64_t checkpoint_every = 0;  // 0 = never
  double grad_clip = 0.0;             // global L2 norm cap; 0 = off

  // Throws ConfigError naming the first failing field.
  void validate() const;
  KeyValues to_key_values() const;
  // Missing keys keep defaults; unknown keys throw ConfigError.
  static TrainConfig from_key_values(const KeyValues& kv);
  bool operator==(const TrainConfig&) const = default;
};

// lr_min + (lr0 - lr_min) (1 + cos(pi step / total)) / 2 for 0 <= step <= total.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct OptimizerState {
  std::map<std::string, Tensor<T>> m;  // first moments, keyed by parameter name
  std::map<std::string, Tensor<T>> v;  // second moments
  std::int64_t step = 0;               // completed updates
  bool operator==(const OptimizerState&) const = default;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param = nullptr;
  bool decay = true;
};

// Norm gains, biases and the learned position-bias table are not decayed;
// every other parameter of rank >= 2 is.
bool applies_weight_decay(const std::string& name, const num::Shape& shape);

template <typename T>
std::vector<NamedParameter<T>> named_parameters(Model<T>& model);

// One update from the accumulated Parameter::grad (an empty grad counts as
// zero): theta *= 1 - lr wd (decayed parameters only), then the
// bias-corrected Adam step. Throws ShapeError when a grad does not match its
// parameter or its stored moments.
template <typename T>
void adamw_step(const std::vector<NamedParameter<T>>& params, OptimizerState<T>& state, double lr,
                const AdamWConfig& config);

struct HistoryRow {
  std::int64_t step = 0;
  double lr = 0;
  double total = 0;
  double l1 = 0, ssim = 0, edge = 0, freq = 0;
  bool operator==(const HistoryRow&) const = default;
};

template <typename T>
struct TrainState {
  Model<T> model;
  OptimizerState<T> optim;
  std::int64_t step = 0;  // next step to run
};

// A non-finite loss stops training; the message names the step and the
// dataset indices of the offending batch.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::int64_t step, std::vector<std::size_t> batch, const std::string& what)
      : std::runtime_error(what), step_(step), batch_(std::move(batch)) {}
  std::int64_t step() const { return step_; }
  const std::vector<std::size_t>& batch() const { return batch_; }

 private:
  std::int64_t step_;
  std::vector<std::size_t> batch_;
};

// Dataset indices for a step: consecutive slices of per-epoch permutations
// seeded by (seed, epoch). A pure function, so resumed runs see the same order.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t step,
                                       std::int64_t batch_size, std::size_t dataset_size);

// Stream key for the dropout and drop-path draws of one step.
std::uint64_t step_noise_key(std::uint64_t seed, std::int64_t step);

template <typename T>
using CheckpointFn = std::function<void(const TrainState<T>&)>;

// Runs steps state.step .. stop_step - 1 (stop_step < 0 means total_steps)
// and returns their history rows. on_checkpoint fires after every
// checkpoint_every-th completed step.
template <typename T>
std::vector<HistoryRow> train(TrainState<T>& state, const std::vector<PatchPair<T>>& data,
                              const TrainConfig& config, std::int64_t stop_step = -1,
                              const std::type_identity_t<CheckpointFn<T>>& on_checkpoint = {});

// Model parameters plus "optim.m.<name>", "optim.v.<name>" and "optim.step".
template <typename T>
Checkpoint train_checkpoint(const TrainState<T>& state);
template <typename T>
TrainState<T> train_state_from_checkpoint(const Checkpoint& ckpt);

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows);

// count HR scenes of extent scale * lr_patch, each degraded into its LR pair.
template <typename T>
std::vector<PatchPair<T>> synthetic_patches(std::int64_t bands, std::size_t count,
                                            std::int64_t lr_patch, const DegradationConfig& deg,
                                            std::uint64_t seed);

struct EvalMetrics {
  double psnr = 0, ssim = 0, mae = 0;  // means over patches
  bool operator==(const EvalMetrics&) const = default;
};

template <typename T>
EvalMetrics evaluate_model(const Model<T>& model, const std::vector<PatchPair<T>>& data);
// Bicubic upsampling of each LR patch against its HR patch.
template <typename T>
EvalMetrics evaluate_bicubic(const std::vector<PatchPair<T>>& data, std::int64_t scale);

struct AblationSetting {
  std::string name;
  FfnKind ffn = FfnKind::kSfg;
  LossWeights loss;
};

// FFN+L1, FFN+all, SFG+L1, SFG+L1/SSIM, SFG+all.
std::vector<AblationSetting> ablation_grid();

struct AblationResult {
  AblationSetting setting;
  std::int64_t params = 0;
  double initial_loss = 0, final_loss = 0;
  EvalMetrics metrics;
};

// Each row trains a fresh model from `base` (same seed) with its own FFN and
// loss terms and is scored on `eval_data`.
template <typename T>
std::vector<AblationResult> run_ablation(const ModelConfig& base, const TrainConfig& train_config,
                                         const std::vector<PatchPair<T>>& train_data,
                                         const std::vector<PatchPair<T>>& eval_data);

std::string format_ablation_table(const std::vector<AblationResult>& rows);
void write_ablation_csv(std::ostream& os, const std::vector<AblationResult>& rows);

// ---- finite-difference verification suite ----
struct GradcheckCase {
  std::string scope;
  std::string name;
  double max_rel_err = 0;
  std::size_t checked = 0;
  bool pass = true;
};

struct GradcheckSuiteOptions {
  int seeds = 5;
  double tol = 1e-4;
  double end_to_end_tol = 1e-3;
};

// numerics, objective, sfg_ffn, swin, model.
std::vector<std::string> gradcheck_scopes();
// scope is one of gradcheck_scopes() or "all"; throws ConfigError otherwise.
std::vector<GradcheckCase> run_gradcheck_suite(const std::string& scope,
                                               const GradcheckSuiteOptions& opts = {});

}  // namespace sfgsr
