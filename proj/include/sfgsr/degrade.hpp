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
#include <vector>

#include "sfgsr/key_value.hpp"
#include "sfgsr/numerics/tensor.hpp"

namespace sfgsr {

using num::Tensor;

struct DegradationConfig {
  double blur_sigma = 1.0;
  std::int64_t blur_kernel_size = 7;
  std::int64_t scale = 2;
  double noise_sigma = 2.0 / 255.0;
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigError
  KeyValues to_key_values() const;
  static DegradationConfig from_key_values(const KeyValues& kv);
  bool operator==(const DegradationConfig&) const = default;
};

// Normalized k x k Gaussian; throws ConfigError for even or non-positive k.
Tensor<double> gaussian_kernel(double sigma, std::int64_t k);

// hr: [b, H, W] in [0, 1] -> lr: [b, H/s, W/s]. Gaussian blur (replicate
// padding), bicubic downsampling, Gaussian noise from Rng(seed ^ image_index),
// clamp to [0, 1].
template <typename T>
Tensor<T> degrade(const Tensor<T>& hr, const DegradationConfig& config, std::uint64_t image_index = 0);

template <typename T>
struct PatchPair {
  Tensor<T> lr;  // [b, p, p]
  Tensor<T> hr;  // [b, s*p, s*p]
  std::int64_t lr_y = 0, lr_x = 0;
  std::int64_t hr_y = 0, hr_x = 0;
};

// Uniform random aligned crops; hr origin == scale * lr origin.
template <typename T>
std::vector<PatchPair<T>> extract_patch_pairs(const Tensor<T>& hr, const Tensor<T>& lr,
                                              std::int64_t lr_patch, std::int64_t scale,
                                              std::size_t count, std::uint64_t seed);

// [b, H, W] procedural scene in [0, 1]: smooth shading, oriented gratings,
// sharp-edged rectangles and fine texture. Deterministic in seed.
template <typename T>
Tensor<T> synthetic_scene(std::int64_t bands, std::int64_t height, std::int64_t width,
                          std::uint64_t seed);

}  // namespace sfgsr
