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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <type_traits>

#include "sfgsr/numerics/rng.hpp"
#include "sfgsr/numerics/tensor.hpp"

namespace sfgsr::testing {

template <typename T>
num::Tensor<T> random_tensor(num::Shape shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  num::Tensor<T> t(std::move(shape));
  num::Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// max_i |a_i - b_i| / max(1e-12, max_i |b_i|); infinity on shape mismatch.
template <typename T>
double max_rel_diff(const num::Tensor<T>& a, const num::Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double diff = 0, scale = 1e-12;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    scale = std::max(scale, std::abs(static_cast<double>(b[i])));
  }
  return diff / scale;
}

template <typename T>
bool bitwise_equal(const num::Tensor<T>& a, const num::Tensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

// Random values including the special encodings a lossless format must keep.
template <typename T>
num::Tensor<T> random_special(num::Shape shape, num::Rng& rng) {
  num::Tensor<T> t(std::move(shape));
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (auto& v : t.data()) {
    switch (rng.below(6)) {
      case 0: v = std::bit_cast<T>(static_cast<Bits>(rng.next_u64())); break;  // any pattern, NaNs too
      case 1: v = -T(0); break;
      case 2: v = std::numeric_limits<T>::denorm_min() * static_cast<T>(rng.below(100)); break;
      case 3: v = rng.below(2) ? std::numeric_limits<T>::infinity() : -std::numeric_limits<T>::infinity(); break;
      default: v = static_cast<T>(rng.uniform(-1e3, 1e3)); break;
    }
  }
  return t;
}

inline num::Shape random_shape(num::Rng& rng, std::size_t max_rank = 4) {
  num::Shape s(rng.below(max_rank + 1));
  for (auto& d : s) d = static_cast<std::int64_t>(rng.below(6));
  return s;
}

}  // namespace sfgsr::testing
