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
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "sfgsr/model.hpp"

namespace sfgsr {

namespace fs = std::filesystem;

// ---- TensorFile: "SFGT", u8 version 1, u8 dtype (1 f32, 2 f64), u8 ndim,
// u8 reserved, ndim x u64 dims, row-major little-endian payload ----
inline constexpr std::uint8_t kTensorFileVersion = 1;
enum class DType : std::uint8_t { kF32 = 1, kF64 = 2 };

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);
// Throws FormatError on bad magic, version, dtype or truncation.
AnyTensor read_any_tensor(std::istream& is);
// Throws FormatError when the stored dtype is not T.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

const num::Shape& shape_of(const AnyTensor& t);
// Value conversion; exact when widening.
template <typename T>
Tensor<T> tensor_as(const AnyTensor& t);

// Writes through `path.tmp` and renames, so readers never see a partial file.
void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& writer);
// Whole file as bytes; throws FormatError when unreadable.
std::string read_file(const fs::path& path);

template <typename T>
void save_tensor_file(const fs::path& path, const Tensor<T>& t);
AnyTensor load_tensor_file(const fs::path& path);

// ---- Checkpoint: "SFGC", u32 version, u32 config length, config text,
// u32 entry count, entries sorted by name: u16 name length, name, TensorFile ----
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;  // ModelConfig as key = value text
  std::map<std::string, AnyTensor> entries;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const fs::path& path);

// Entries whose names start with this prefix hold optimizer state and are
// ignored when restoring a model.
inline const std::string kOptimizerPrefix = "optim.";

template <typename T>
Checkpoint model_checkpoint(const Model<T>& model);
ModelConfig checkpoint_config(const Checkpoint& ckpt);
// Copies every model parameter from the checkpoint. Throws FormatError listing
// all missing and all unknown names, or any shape mismatch.
template <typename T>
void assign_parameters(Model<T>& model, const Checkpoint& ckpt);
template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt);

// ---- images ----
// Binary P6 with maxval 255 <-> [3, H, W] in [0, 1]: v / 255 on read,
// floor(255 x + 0.5) after clamping on write.
Tensor<float> decode_ppm(const std::string& bytes);
std::string encode_ppm(const Tensor<float>& image);

// ".ppm" files are P6; anything else is a TensorFile, accompanied on write
// by a "<file>.bands" note.
bool is_ppm_path(const fs::path& path);
Tensor<float> load_image(const fs::path& path);
void save_image(const fs::path& path, const Tensor<float>& image);

}  // namespace sfgsr
