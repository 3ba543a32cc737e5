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
#include <complex>
#include <functional>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "sfgsr/errors.hpp"
#include "sfgsr/numerics/grad_check.hpp"
#include "sfgsr/objective.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sfgsr;
using sfgsr::testing::random_tensor;
using sfgsr::testing::freq_oracle;
using sfgsr::testing::ssim_oracle;

namespace {

using LossFn = std::function<Var<double>(const Var<double>&, const Var<double>&)>;

double eval(const LossFn& f, const Tensor<double>& a, const Tensor<double>& b) {
  Tape<double> tape(false);
  return f(tape.constant(a), tape.constant(b)).value()[0];
}

const std::vector<std::pair<const char*, LossFn>>& all_terms() {
  static const std::vector<std::pair<const char*, LossFn>> terms{
      {"l1", [](const Var<double>& a, const Var<double>& b) { return l1_loss(a, b); }},
      {"ssim", [](const Var<double>& a, const Var<double>& b) { return ssim_loss(a, b); }},
      {"edge", [](const Var<double>& a, const Var<double>& b) { return edge_loss(a, b); }},
      {"freq", [](const Var<double>& a, const Var<double>& b) { return freq_loss(a, b); }},
  };
  return terms;
}

}  // namespace

TEST_CASE("l1: zero, offset, loop oracle, shape check") {
  const auto a = random_tensor<double>({2, 3, 8, 8}, 1, 0, 1);
  const auto b = random_tensor<double>({2, 3, 8, 8}, 2, 0, 1);
  CHECK(eval(all_terms()[0].second, a, a) == 0.0);
  CHECK(eval(all_terms()[0].second, Tensor<double>({1, 1, 4, 4}, 0.75), Tensor<double>({1, 1, 4, 4}, 0.5)) == 0.25);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  CHECK(eval(all_terms()[0].second, a, b) == doctest::Approx(s / a.size()).epsilon(1e-7));
  Tape<double> tape(false);
  CHECK_THROWS_AS(l1_loss(tape.constant(a), tape.constant(Tensor<double>({2, 3, 8, 7}))), ShapeError);
}

TEST_CASE("ssim: oracle, identity, symmetry, anti-correlation, size check") {
  const auto a = random_tensor<double>({1, 3, 16, 16}, 3, 0, 1);
  const auto b = random_tensor<double>({1, 3, 16, 16}, 4, 0, 1);
  Tape<double> tape(false);
  auto S = [&](const Tensor<double>& x, const Tensor<double>& y) {
    return ssim(tape.constant(x), tape.constant(y)).value()[0];
  };
  CHECK(S(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-5));
  CHECK(std::abs(S(a, a) - 1.0) <= 1e-9);
  CHECK(std::abs(S(a, b) - S(b, a)) <= 1e-9);
  Tensor<double> checker({1, 1, 12, 12}), inverse({1, 1, 12, 12});
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) {
      checker.at({0, 0, i, j}) = (i + j) % 2;
      inverse.at({0, 0, i, j}) = 1 - (i + j) % 2;
    }
  const double anti = S(checker, inverse);
  CHECK(anti < 0.0);
  CHECK(anti == doctest::Approx(ssim_oracle(checker, inverse)).epsilon(1e-9));
  CHECK(eval(all_terms()[1].second, a, a) == doctest::Approx(0.0));
  CHECK_THROWS_AS(S(Tensor<double>({1, 1, 10, 16}), Tensor<double>({1, 1, 10, 16})), ConfigError);
}

TEST_CASE("edge: zero, offset invariance, ramp slope, loop oracle") {
  const auto a = random_tensor<double>({1, 2, 9, 7}, 5, 0, 1);
  const auto b = random_tensor<double>({1, 2, 9, 7}, 6, 0, 1);
  const auto& edge = all_terms()[2].second;
  CHECK(eval(edge, a, a) == 0.0);
  Tensor<double> shifted = a;
  for (auto& v : shifted.data()) v += 0.3;
  CHECK(eval(edge, shifted, a) <= 1e-15);

  Tensor<double> ramp({1, 1, 6, 6}), flat({1, 1, 6, 6}, 0.5);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) ramp.at({0, 0, i, j}) = 0.125 * j;
  CHECK(eval(edge, ramp, flat) == 0.125);

  double sx = 0, sy = 0;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 7; ++j) {
        if (j + 1 < 7) sx += std::abs((a.at({0, c, i, j + 1}) - a.at({0, c, i, j})) - (b.at({0, c, i, j + 1}) - b.at({0, c, i, j})));
        if (i + 1 < 9) sy += std::abs((a.at({0, c, i + 1, j}) - a.at({0, c, i, j})) - (b.at({0, c, i + 1, j}) - b.at({0, c, i, j})));
      }
  CHECK(eval(edge, a, b) == doctest::Approx(sx / (2 * 9 * 6) + sy / (2 * 8 * 7)).epsilon(1e-12));
}

TEST_CASE("freq: zero, DC offset, naive DFT oracle, padding, symmetry") {
  const auto a = random_tensor<double>({1, 3, 8, 8}, 7, 0, 1);
  const auto b = random_tensor<double>({1, 3, 8, 8}, 8, 0, 1);
  const auto& freq = all_terms()[3].second;
  CHECK(eval(freq, a, a) == 0.0);
  Tensor<double> off = a;
  for (auto& v : off.data()) v += 0.2;
  // Only the DC bin differs, by 0.2 * H * W, over H * W bins.
  const double dc = 0.2 * 64;
  CHECK(eval(freq, off, a) == doctest::Approx((std::sqrt(dc * dc + 1e-12) - 1e-6) / 64).epsilon(1e-9));
  CHECK(eval(freq, a, b) == doctest::Approx(freq_oracle(a, b, false)).epsilon(1e-5));
  CHECK(eval(freq, a, b) == eval(freq, b, a));

  Tape<double> tape(false);
  FreqOptions amp;
  amp.amplitude = true;
  CHECK(freq_loss(tape.constant(a), tape.constant(b), amp).value()[0] ==
        doctest::Approx(freq_oracle(a, b, true)).epsilon(1e-5));

  const auto c = random_tensor<double>({1, 1, 6, 5}, 9, 0, 1);
  const auto d = random_tensor<double>({1, 1, 6, 5}, 10, 0, 1);
  auto pad = [&](const Tensor<double>& t) { return num::pad_reflect(tape.constant(t), 2, 3).value(); };
  CHECK(eval(freq, c, d) == doctest::Approx(freq_oracle(pad(c), pad(d), false)).epsilon(1e-5));
  FreqOptions strict;
  strict.pad_to_pow2 = false;
  CHECK_THROWS_AS(freq_loss(tape.constant(c), tape.constant(d), strict), ConfigError);
}

TEST_CASE("total: zero on identical, single-term rows, recombination") {
  const auto a = random_tensor<double>({2, 3, 16, 16}, 11, 0, 1);
  const auto b = random_tensor<double>({2, 3, 16, 16}, 12, 0, 1);
  Tape<double> tape(false);
  auto va = tape.constant(a), vb = tape.constant(b);
  const auto same = total_loss(va, va, LossWeights{});
  CHECK(same.total.value()[0] == 0.0);
  CHECK(same.l1 == 0.0);
  CHECK(same.edge == 0.0);
  CHECK(same.freq == 0.0);
  CHECK(std::abs(same.ssim) <= 1e-12);

  LossWeights only_l1;
  only_l1.ssim = only_l1.edge = only_l1.freq = 0;
  CHECK(total_loss(va, vb, only_l1).total.value()[0] == l1_loss(va, vb).value()[0]);
  CHECK(only_l1.label() == "L1");

  const LossWeights w;
  const auto t = total_loss(va, vb, w);
  CHECK(t.l1 == l1_loss(va, vb).value()[0]);
  CHECK(t.ssim == ssim_loss(va, vb).value()[0]);
  CHECK(t.edge == edge_loss(va, vb).value()[0]);
  CHECK(t.freq == freq_loss(va, vb).value()[0]);
  CHECK(t.total.value()[0] == ((1.0 * t.l1 + 0.1 * t.ssim) + 0.1 * t.edge) + 0.05 * t.freq);
  CHECK(w.label() == "L1+SSIM+Edge+Freq");

  LossWeights none = only_l1;
  none.use_l1 = false;
  CHECK_THROWS_AS(total_loss(va, vb, none), ConfigError);
  LossWeights neg;
  neg.edge = -1;
  CHECK_THROWS_AS(total_loss(va, vb, neg), ConfigError);

  KeyValues kv;
  w.write(kv, "loss.");
  CHECK(LossWeights::read(kv, "loss.") == w);
}

TEST_CASE("losses: batch mean equals mean of per-item losses") {
  const auto a = random_tensor<double>({3, 2, 16, 16}, 13, 0, 1);
  const auto b = random_tensor<double>({3, 2, 16, 16}, 14, 0, 1);
  for (const auto& [name, f] : all_terms()) {
    double per_item = 0;
    for (int i = 0; i < 3; ++i) {
      Tape<double> tape(false);
      per_item += f(num::narrow(tape.constant(a), 0, i, 1), num::narrow(tape.constant(b), 0, i, 1)).value()[0];
    }
    INFO(std::string(name));
    CHECK(eval(f, a, b) == doctest::Approx(per_item / 3).epsilon(1e-12));
  }
}

TEST_CASE("losses: non-decreasing in noise amplitude") {
  const auto hr = random_tensor<double>({1, 3, 16, 16}, 15, 0.2, 0.8);
  const auto noise = random_tensor<double>({1, 3, 16, 16}, 16);
  for (const auto& [name, f] : all_terms()) {
    double prev = -1;
    for (double t : {0.0, 0.01, 0.02, 0.05}) {
      Tensor<double> sr = hr;
      for (std::size_t i = 0; i < sr.size(); ++i) sr[i] += t * noise[i];
      const double v = eval(f, sr, hr);
      INFO(std::string(name) << " t=" << t);
      CHECK(v >= 0.0);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("losses: gradients match finite differences") {
  const auto a = random_tensor<double>({1, 3, 16, 16}, 17, 0, 1);
  const auto b = random_tensor<double>({1, 3, 16, 16}, 18, 0, 1);
  for (const auto& [name, f] : all_terms()) {
    const auto r = num::grad_check([&](Tape<double>& tape, const Var<double>& x) { return f(x, tape.constant(b)); }, a);
    INFO(std::string(name) << " err " << r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("metrics: closed-form PSNR, SSIM identity, MAE offset") {
  const Tensor<float> hr({3, 16, 16}, 0.5f);
  CHECK(psnr(hr, hr) == std::numeric_limits<double>::infinity());
  Tensor<double> x({1, 10, 10}, 0.0), y({1, 10, 10}, 0.0);
  for (int i = 0; i < 100; i += 1) x[i] = (i % 2 == 0) ? 0.1 : -0.1;
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(std::abs(psnr(x, y) - 20.0) <= 1e-6);
  CHECK(psnr(x, y) == psnr(y, x));
  Tensor<double> u({1, 4, 4}, 0.6), v({1, 4, 4}, 0.5);
  CHECK(std::abs(psnr(u, v) - 20.0) <= 1e-6);
  const auto img = random_tensor<float>({3, 16, 16}, 19, 0, 1);
  CHECK(std::abs(ssim_metric(img, img) - 1.0) <= 1e-9);
  CHECK(mae(Tensor<double>({2, 4, 4}, 0.5), Tensor<double>({2, 4, 4}, 0.25)) == 0.25);
  CHECK(psnr(hr, hr, 255.0) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(psnr(hr, Tensor<float>({3, 16, 15})), ShapeError);
}
