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

#include "sfgsr/errors.hpp"
#include "sfgsr/model.hpp"

namespace sfgsr {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("model config: " + field + " " + why);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "scale",    "bands",     "embed_dim", "depths",      "heads",       "window",
      "mlp_ratio", "ffn",      "blur_k",    "gate_rho",    "dropout",     "drop_path",
      "position_bias", "bias_hidden", "upsample_features", "seed"};
  return keys;
}

}  // namespace

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.embed_dim = 16;
  c.depths = {2, 2};
  c.heads = {2, 2};
  c.bias_mode = PositionBias::kTable;
  c.upsample_features = 16;
  return c;
}

void ModelConfig::validate() const {
  require(scale >= 2 && (scale & (scale - 1)) == 0, "scale", "must be a power of two >= 2");
  require(bands >= 1, "bands", "must be >= 1");
  require(embed_dim >= 1, "embed_dim", "must be >= 1");
  require(!depths.empty(), "depths", "must list at least one stage");
  require(depths.size() == heads.size(), "heads", "must have one entry per stage");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    require(depths[i] >= 1, "depths", "entries must be >= 1");
    require(heads[i] >= 1 && embed_dim % heads[i] == 0, "heads",
            "entry " + std::to_string(heads[i]) + " does not divide embed_dim " + std::to_string(embed_dim));
  }
  require(window >= 1, "window", "must be >= 1");
  require(mlp_ratio > 0.0 && ffn_hidden_dim(embed_dim, mlp_ratio) >= 1, "mlp_ratio", "must give a hidden width >= 1");
  require(blur_k >= 1 && blur_k % 2 == 1, "blur_k", "must be odd");
  require(gate_rho >= 1.0, "gate_rho", "must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must be in [0, 1)");
  require(drop_path >= 0.0 && drop_path <= 1.0, "drop_path", "must be in [0, 1]");
  require(bias_hidden >= 1, "bias_hidden", "must be >= 1");
  require(upsample_features >= 1, "upsample_features", "must be >= 1");
}

std::int64_t ModelConfig::total_blocks() const {
  std::int64_t n = 0;
  for (auto d : depths) n += d;
  return n;
}

std::string to_string(FfnKind k) { return k == FfnKind::kSfg ? "sfg" : "baseline"; }

FfnKind parse_ffn_kind(const std::string& s) {
  if (s == "sfg") return FfnKind::kSfg;
  if (s == "baseline") return FfnKind::kBaseline;
  throw ConfigError("ffn must be 'sfg' or 'baseline', got '" + s + "'");
}

std::string to_string(PositionBias m) { return m == PositionBias::kContinuous ? "continuous" : "table"; }

PositionBias parse_position_bias(const std::string& s) {
  if (s == "continuous") return PositionBias::kContinuous;
  if (s == "table") return PositionBias::kTable;
  throw ConfigError("position_bias must be 'continuous' or 'table', got '" + s + "'");
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("scale", std::to_string(scale));
  kv.set("bands", std::to_string(bands));
  kv.set("embed_dim", std::to_string(embed_dim));
  kv.set("depths", join_ints(depths));
  kv.set("heads", join_ints(heads));
  kv.set("window", std::to_string(window));
  kv.set("mlp_ratio", format_double(mlp_ratio));
  kv.set("ffn", to_string(ffn));
  kv.set("blur_k", std::to_string(blur_k));
  kv.set("gate_rho", format_double(gate_rho));
  kv.set("dropout", format_double(dropout));
  kv.set("drop_path", format_double(drop_path));
  kv.set("position_bias", to_string(bias_mode));
  kv.set("bias_hidden", std::to_string(bias_hidden));
  kv.set("upsample_features", std::to_string(upsample_features));
  kv.set("seed", std::to_string(seed));
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  kv.reject_unknown(known_keys(), "model config");
  ModelConfig c;
  if (kv.has("scale")) c.scale = kv.get_int("scale");
  if (kv.has("bands")) c.bands = kv.get_int("bands");
  if (kv.has("embed_dim")) c.embed_dim = kv.get_int("embed_dim");
  if (kv.has("depths")) c.depths = kv.get_int_list("depths");
  if (kv.has("heads")) c.heads = kv.get_int_list("heads");
  if (kv.has("window")) c.window = kv.get_int("window");
  if (kv.has("mlp_ratio")) c.mlp_ratio = kv.get_double("mlp_ratio");
  if (kv.has("ffn")) c.ffn = parse_ffn_kind(kv.get("ffn"));
  if (kv.has("blur_k")) c.blur_k = kv.get_int("blur_k");
  if (kv.has("gate_rho")) c.gate_rho = kv.get_double("gate_rho");
  if (kv.has("dropout")) c.dropout = kv.get_double("dropout");
  if (kv.has("drop_path")) c.drop_path = kv.get_double("drop_path");
  if (kv.has("position_bias")) c.bias_mode = parse_position_bias(kv.get("position_bias"));
  if (kv.has("bias_hidden")) c.bias_hidden = kv.get_int("bias_hidden");
  if (kv.has("upsample_features")) c.upsample_features = kv.get_int("upsample_features");
  if (kv.has("seed")) {
    const auto& s = kv.get("seed");
    const auto r = std::from_chars(s.data(), s.data() + s.size(), c.seed);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError("config key 'seed': expected an unsigned integer, got '" + s + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace sfgsr
