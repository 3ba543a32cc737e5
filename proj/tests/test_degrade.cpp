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

#include "doctest.h"
#include "sfgsr/degrade.hpp"
#include "sfgsr/errors.hpp"
#include "test_util.hpp"

using namespace sfgsr;
using sfgsr::testing::random_tensor;

TEST_CASE("gaussian kernel: normalization, delta limit, closed form") {
  for (double sigma : {0.3, 1.0, 2.5})
    for (std::int64_t k : {1, 3, 5, 7, 11}) {
      const auto g = gaussian_kernel(sigma, k);
      double s = 0;
      for (double v : g.data()) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-7));
    }
  CHECK(gaussian_kernel(1e-6, 5).at({2, 2}) == doctest::Approx(1.0).epsilon(1e-12));

  const auto g = gaussian_kernel(1.0, 5);
  double z = 0;
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j) z += std::exp(-(i * i + j * j) / 2.0);
  CHECK(g.at({2, 2}) == doctest::Approx(1.0 / z).epsilon(1e-12));
  CHECK(g.at({2, 2}) / g.at({0, 2}) == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
  CHECK(g.at({2, 2}) / g.at({0, 0}) == doctest::Approx(std::exp(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_kernel(1.0, 4), ConfigError);
}

TEST_CASE("degrade: constants survive, dims divide, config checked") {
  DegradationConfig cfg;
  cfg.noise_sigma = 0;
  const auto lr = degrade(Tensor<float>({3, 16, 12}, 0.5f), cfg);
  CHECK(lr.shape() == num::Shape{3, 8, 6});
  for (float v : lr.data()) CHECK(v == 0.5f);
  const auto lr2 = degrade(Tensor<double>({1, 8, 8}, 0.3), cfg);
  for (double v : lr2.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
  CHECK_THROWS_AS(degrade(Tensor<float>({3, 15, 12}), cfg), ShapeError);
  cfg.blur_kernel_size = 6;
  CHECK_THROWS_AS(degrade(Tensor<float>({3, 16, 12}), cfg), ConfigError);
}

TEST_CASE("degrade: deterministic per seed and image index") {
  DegradationConfig cfg;
  const auto hr = synthetic_scene<float>(3, 32, 32, 1);
  CHECK(degrade(hr, cfg, 3) == degrade(hr, cfg, 3));
  CHECK(!(degrade(hr, cfg, 3) == degrade(hr, cfg, 4)));
  auto other = cfg;
  other.seed = 43;
  CHECK(!(degrade(hr, cfg) == degrade(hr, other)));
}

TEST_CASE("degrade: noise statistics over 10^4 pixels") {
  DegradationConfig cfg;
  cfg.noise_sigma = 0.01;
  const auto lr = degrade(Tensor<double>({1, 200, 200}, 0.5), cfg);
  const double n = static_cast<double>(lr.size());
  CHECK(n >= 1e4);
  double mean = 0;
  for (double v : lr.data()) mean += v;
  mean /= n;
  double var = 0;
  for (double v : lr.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1));
  CHECK(std::abs(mean - 0.5) <= 3 * 0.01 / std::sqrt(n));
  CHECK(std::abs(sd / 0.01 - 1.0) <= 0.10);
}

TEST_CASE("degrade: noise-free pipeline commutes with constant shifts") {
  DegradationConfig cfg;
  cfg.noise_sigma = 0;
  const auto x = random_tensor<double>({2, 16, 16}, 5, 0.3, 0.6);
  Tensor<double> shifted = x;
  for (auto& v : shifted.data()) v += 0.125;
  const auto a = degrade(x, cfg), b = degrade(shifted, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i] + 0.125).epsilon(1e-12));
}

TEST_CASE("patch pairs: sizes, alignment, content, errors") {
  const auto hr = synthetic_scene<float>(3, 256, 256, 2);
  DegradationConfig cfg;
  const auto lr = degrade(hr, cfg);
  const auto pairs = extract_patch_pairs(hr, lr, 64, 2, 6, 9);
  CHECK(pairs.size() == 6);
  for (const auto& p : pairs) {
    CHECK(p.lr.shape() == num::Shape{3, 64, 64});
    CHECK(p.hr.shape() == num::Shape{3, 128, 128});
    CHECK(p.hr_y == 2 * p.lr_y);
    CHECK(p.hr_x == 2 * p.lr_x);
    CHECK(p.lr.at({1, 5, 7}) == lr.at({1, p.lr_y + 5, p.lr_x + 7}));
    CHECK(p.hr.at({2, 127, 0}) == hr.at({2, p.hr_y + 127, p.hr_x}));
  }
  const auto again = extract_patch_pairs(hr, lr, 64, 2, 6, 9);
  for (std::size_t i = 0; i < 6; ++i) CHECK(again[i].lr_y == pairs[i].lr_y);

  DegradationConfig c4;
  c4.scale = 4;
  const auto lr4 = degrade(hr, c4);
  CHECK(extract_patch_pairs(hr, lr4, 64, 4, 1, 1)[0].hr.shape() == num::Shape{3, 256, 256});
  CHECK_THROWS_AS(extract_patch_pairs(hr, lr4, 65, 4, 1, 1), ConfigError);
  CHECK_THROWS_AS(extract_patch_pairs(hr, lr4, 16, 2, 1, 1), ShapeError);
}

TEST_CASE("synthetic scene: range, determinism, has structure") {
  const auto a = synthetic_scene<float>(4, 48, 40, 3);
  CHECK(a.shape() == num::Shape{4, 48, 40});
  CHECK(a == synthetic_scene<float>(4, 48, 40, 3));
  float lo = 1, hi = 0;
  for (float v : a.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0f);
  CHECK(hi <= 1.0f);
  CHECK(hi - lo > 0.2f);
}

TEST_CASE("degradation config: key=value round trip") {
  DegradationConfig c;
  c.noise_sigma = 0.0123;
  c.seed = 99;
  CHECK(DegradationConfig::from_key_values(KeyValues::parse(c.to_key_values().to_text())) == c);
  CHECK_THROWS_AS(DegradationConfig::from_key_values(KeyValues::parse("sigma = 1\n")), ConfigError);
}
