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
#include <limits>

#include "sfgsr/errors.hpp"
#include "sfgsr/objective.hpp"

namespace sfgsr {

namespace {

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": sr " + num::to_string(a.shape()) + " vs hr " +
                     num::to_string(b.shape()));
  }
}

Tensor<double> as_batch(const num::Shape& s, Tensor<double> t) {
  if (s.size() == 3) return t.reshaped({1, s[0], s[1], s[2]});
  if (s.size() == 4) return t;
  throw ShapeError("metric: expected [b, H, W] or [B, b, H, W], got " + num::to_string(s));
}

}  // namespace

template <typename T>
double psnr(const Tensor<T>& sr, const Tensor<T>& hr, double peak) {
  check_same(sr, hr, "psnr");
  double sse = 0;
  for (std::size_t i = 0; i < sr.size(); ++i) {
    const double d = static_cast<double>(sr[i]) - static_cast<double>(hr[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(sr.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

template <typename T>
double mae(const Tensor<T>& sr, const Tensor<T>& hr) {
  check_same(sr, hr, "mae");
  double s = 0;
  for (std::size_t i = 0; i < sr.size(); ++i) s += std::abs(static_cast<double>(sr[i]) - static_cast<double>(hr[i]));
  return s / static_cast<double>(sr.size());
}

template <typename T>
double ssim_metric(const Tensor<T>& sr, const Tensor<T>& hr) {
  check_same(sr, hr, "ssim");
  Tape<double> tape(false);
  auto a = tape.constant(as_batch(sr.shape(), sr.template cast<double>()));
  auto b = tape.constant(as_batch(hr.shape(), hr.template cast<double>()));
  return ssim(a, b).value()[0];
}

#define SFGSR_INSTANTIATE(T)                                            \
  template double psnr(const Tensor<T>&, const Tensor<T>&, double);    \
  template double mae(const Tensor<T>&, const Tensor<T>&);             \
  template double ssim_metric(const Tensor<T>&, const Tensor<T>&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)

}  // namespace sfgsr
