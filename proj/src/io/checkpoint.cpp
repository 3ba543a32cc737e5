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

#include <set>
#include <sstream>

#include "binary.hpp"
#include "sfgsr/io.hpp"

namespace sfgsr {

using namespace io_detail;

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'F', 'G', 'C'};
constexpr std::uint32_t kMaxConfigBytes = 1u << 20;

bool is_optimizer_entry(const std::string& name) {
  return name.rfind(kOptimizerPrefix, 0) == 0;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  if (ckpt.config_text.size() > kMaxConfigBytes) throw FormatError("checkpoint config too large");
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.config_text.size()));
  os.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.entries.size()));
  // std::map iterates in byte-wise name order.
  for (const auto& [name, tensor] : ckpt.entries) {
    if (name.empty() || name.size() > 0xFFFF) throw FormatError("invalid entry name length");
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    std::visit([&](const auto& t) { write_tensor(os, t); }, tensor);
  }
  if (!os) throw FormatError("write failed while writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  get_bytes(is, magic, 4, "checkpoint magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic");
  const auto version = get_le<std::uint32_t>(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto len = get_le<std::uint32_t>(is, "config length");
  if (len > kMaxConfigBytes) throw FormatError("checkpoint config too large");
  ckpt.config_text.resize(len);
  get_bytes(is, ckpt.config_text.data(), len, "config text");
  const auto count = get_le<std::uint32_t>(is, "entry count");
  std::string previous;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto n = get_le<std::uint16_t>(is, "entry name length");
    std::string name(n, '\0');
    get_bytes(is, name.data(), n, "entry name");
    if (name.empty()) throw FormatError("empty checkpoint entry name");
    if (i > 0 && !(previous < name)) {
      throw FormatError("checkpoint entries not strictly sorted at '" + name + "'");
    }
    ckpt.entries.emplace(name, read_any_tensor(is));
    previous = std::move(name);
  }
  return ckpt;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  atomic_write(path, [&](std::ostream& os) { write_checkpoint(os, ckpt); });
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::istringstream is(read_file(path));
  Checkpoint ckpt = read_checkpoint(is);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after checkpoint in " + path.string());
  }
  return ckpt;
}

template <typename T>
Checkpoint model_checkpoint(const Model<T>& model) {
  Checkpoint ckpt;
  ckpt.config_text = model.config.to_key_values().to_text();
  model.for_each_parameter([&](const std::string& name, const Parameter<T>& p) {
    if (!ckpt.entries.emplace(name, p.value).second) {
      throw UsageError("duplicate parameter name " + name);
    }
  });
  return ckpt;
}

ModelConfig checkpoint_config(const Checkpoint& ckpt) {
  ModelConfig cfg = ModelConfig::from_key_values(KeyValues::parse(ckpt.config_text));
  cfg.validate();
  return cfg;
}

template <typename T>
void assign_parameters(Model<T>& model, const Checkpoint& ckpt) {
  std::vector<std::string> missing, mismatched, unknown;
  std::set<std::string> seen;
  model.for_each_parameter([&](const std::string& name, Parameter<T>& p) {
    seen.insert(name);
    auto it = ckpt.entries.find(name);
    if (it == ckpt.entries.end()) {
      missing.push_back(name);
      return;
    }
    if (shape_of(it->second) != p.value.shape()) {
      mismatched.push_back(name + " " + num::to_string(shape_of(it->second)) + " vs " +
                           num::to_string(p.value.shape()));
      return;
    }
    p.value = tensor_as<T>(it->second);
    p.grad = Tensor<T>();
  });
  for (const auto& [name, t] : ckpt.entries) {
    if (!is_optimizer_entry(name) && !seen.count(name)) unknown.push_back(name);
  }
  if (missing.empty() && unknown.empty() && mismatched.empty()) return;
  std::string msg = "checkpoint does not match the model:";
  for (const auto& n : missing) msg += "\n  missing: " + n;
  for (const auto& n : unknown) msg += "\n  unknown: " + n;
  for (const auto& n : mismatched) msg += "\n  shape mismatch: " + n;
  throw FormatError(msg);
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt) {
  Model<T> model = build_model<T>(checkpoint_config(ckpt));
  assign_parameters(model, ckpt);
  return model;
}

#define SFGSR_INSTANTIATE(T)                                  \
  template Checkpoint model_checkpoint(const Model<T>&);      \
  template void assign_parameters(Model<T>&, const Checkpoint&); \
  template Model<T> model_from_checkpoint<T>(const Checkpoint&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)
#undef SFGSR_INSTANTIATE

}  // namespace sfgsr
