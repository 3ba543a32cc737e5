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
#include <numbers>
#include <string>

#include "doctest.h"
#include "sfgsr/numerics/grad_check.hpp"
#include "sfgsr/numerics/ops.hpp"
#include "test_util.hpp"

using namespace sfgsr;
using namespace sfgsr::num;
using sfgsr::testing::max_rel_diff;
using sfgsr::testing::random_tensor;

namespace {

Tensor<double> eval(const std::function<Var<double>(Tape<double>&)>& f) {
  Tape<double> tape(false);
  return f(tape).value();
}

// x * Phi(x) with Phi from the Maclaurin series of erf, summed in long double.
double gelu_series_oracle(double x) {
  const long double z = x / std::numbers::sqrt2;
  long double term = z, sum = z;
  for (int n = 1; n < 60; ++n) {
    term *= -z * z / n;
    sum += term / (2 * n + 1);
  }
  const long double erf = 2.0L / std::sqrt(std::numbers::pi_v<long double>) * sum;
  return static_cast<double>(x * 0.5L * (1.0L + erf));
}

}  // namespace

TEST_CASE("linear: identity, affine shift, naive matmul oracle") {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>({2}, {1, 2}));
  auto eye = tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  CHECK(linear(x, eye, tape.constant(Tensor<double>({2}, {0, 0}))).value().storage() ==
        std::vector<double>{1, 2});
  CHECK(linear(x, eye, tape.constant(Tensor<double>({2}, {1, 1}))).value().storage() ==
        std::vector<double>{2, 3});

  const auto xr = random_tensor<double>({4, 8}, 1);
  const auto wr = random_tensor<double>({8, 3}, 2);
  const auto br = random_tensor<double>({3}, 3);
  Tensor<double> oracle({4, 3});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = br[j];
      for (int k = 0; k < 8; ++k) s += xr.at({i, k}) * wr.at({k, j});
      oracle.at({i, j}) = s;
    }
  auto y = linear(tape.constant(xr), tape.constant(wr), tape.constant(br));
  CHECK(max_rel_diff(y.value(), oracle) <= 1e-6);
}

TEST_CASE("linear: mismatch reports both shapes") {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>({2, 3}));
  auto w = tape.constant(Tensor<double>({4, 5}));
  try {
    linear(x, w);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 5]") != std::string::npos);
  }
}

TEST_CASE("depthwise_conv2d: DC preservation, impulse response, direct oracle") {
  Tape<double> tape(false);
  Tensor<double> box({1, 5, 5}, 1.0 / 25.0);

  auto c = depthwise_conv2d(tape.constant(Tensor<double>({1, 1, 7, 6}, 5.0)), tape.constant(box),
                            PadMode::kReplicate);
  for (double v : c.value().data()) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));

  Tensor<double> imp({1, 1, 9, 9});
  imp.at({0, 0, 4, 4}) = 1.0;
  auto r = depthwise_conv2d(tape.constant(imp), tape.constant(box), PadMode::kReplicate);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      const bool inside = std::abs(i - 4) <= 2 && std::abs(j - 4) <= 2;
      CHECK(r.value().at({0, 0, i, j}) == doctest::Approx(inside ? 0.04 : 0.0));
    }

  const auto x = random_tensor<double>({1, 2, 8, 8}, 4);
  const auto k = random_tensor<double>({2, 3, 3}, 5);
  for (PadMode pad : {PadMode::kZero, PadMode::kReplicate}) {
    Tensor<double> oracle({1, 2, 8, 8});
    for (int ch = 0; ch < 2; ++ch)
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              int si = i + u - 1, sj = j + v - 1;
              if (pad == PadMode::kZero && (si < 0 || sj < 0 || si > 7 || sj > 7)) continue;
              si = std::clamp(si, 0, 7);
              sj = std::clamp(sj, 0, 7);
              oracle.at({0, ch, i, j}) += k.at({ch, u, v}) * x.at({0, ch, si, sj});
            }
    auto y = depthwise_conv2d(tape.constant(x), tape.constant(k), pad);
    CHECK(max_rel_diff(y.value(), oracle) <= 1e-6);
  }

  CHECK_THROWS_AS(depthwise_conv2d(tape.constant(x), tape.constant(Tensor<double>({2, 4, 4})),
                                   PadMode::kZero),
                  ConfigError);
}

TEST_CASE("conv2d: identity kernel, bias only, direct oracle, channel mismatch") {
  Tape<double> tape(false);
  const auto x1 = random_tensor<double>({1, 1, 5, 5}, 6);
  Tensor<double> id({1, 1, 3, 3});
  id.at({0, 0, 1, 1}) = 1.0;
  auto y = conv2d(tape.constant(x1), tape.constant(id), tape.constant(Tensor<double>({1})));
  CHECK(y.value() == x1);

  auto yb = conv2d(tape.constant(x1), tape.constant(Tensor<double>({1, 1, 3, 3})),
                   tape.constant(Tensor<double>({1}, {0.7})));
  for (double v : yb.value().data()) CHECK(v == 0.7);

  const auto x = random_tensor<double>({1, 3, 6, 6}, 7);
  const auto k = random_tensor<double>({4, 3, 3, 3}, 8);
  const auto b = random_tensor<double>({4}, 9);
  Tensor<double> oracle({1, 4, 6, 6});
  for (int co = 0; co < 4; ++co)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        double s = b[co];
        for (int ci = 0; ci < 3; ++ci)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              const int si = i + u - 1, sj = j + v - 1;
              if (si < 0 || sj < 0 || si > 5 || sj > 5) continue;
              s += k.at({co, ci, u, v}) * x.at({0, ci, si, sj});
            }
        oracle.at({0, co, i, j}) = s;
      }
  auto yr = conv2d(tape.constant(x), tape.constant(k), tape.constant(b));
  CHECK(max_rel_diff(yr.value(), oracle) <= 1e-6);

  CHECK_THROWS_AS(conv2d(tape.constant(x), tape.constant(Tensor<double>({4, 2, 3, 3}))), ShapeError);
}

TEST_CASE("gelu and sigmoid reference points") {
  auto y = eval([](Tape<double>& t) {
    return gelu(t.constant(Tensor<double>({3}, {0.0, 10.0, 1.0})));
  });
  CHECK(y[0] == 0.0);
  CHECK(std::abs(y[1] - 10.0) <= 1e-4);
  const double oracle = gelu_series_oracle(1.0);
  CHECK(std::abs(oracle - 0.84134) <= 1e-4);
  CHECK(std::abs(y[2] - oracle) <= 1e-12);
  auto s = eval([](Tape<double>& t) { return sigmoid(t.constant(Tensor<double>::scalar(0.0))); });
  CHECK(s[0] == 0.5);
}

TEST_CASE("softmax: uniform rows, shift invariance, closed form, row sums") {
  auto u = eval([](Tape<double>& t) { return softmax(t.constant(Tensor<double>({4}, 3.0)), 0); });
  for (double v : u.data()) CHECK(v == doctest::Approx(0.25));

  const auto x = random_tensor<double>({3, 5}, 10, -20.0, 20.0);
  auto a = eval([&](Tape<double>& t) { return softmax(t.constant(x), 1); });
  auto b = eval([&](Tape<double>& t) { return softmax(add_scalar(t.constant(x), 7.5), 1); });
  CHECK(max_rel_diff(a, b) <= 1e-7);
  for (int r = 0; r < 3; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) {
      CHECK(a.at({r, c}) >= 0.0);
      s += a.at({r, c});
    }
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  auto cf = eval([](Tape<double>& t) {
    return softmax(t.constant(Tensor<double>({2}, {0.0, std::log(2.0)})), 0);
  });
  CHECK(cf[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(cf[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // along a non-trailing axis
  auto col = eval([&](Tape<double>& t) { return softmax(t.constant(x), 0); });
  for (int c = 0; c < 5; ++c) {
    double s = 0;
    for (int r = 0; r < 3; ++r) s += col.at({r, c});
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
}

TEST_CASE("layernorm: constant token, hand-computed token, mean equals beta") {
  Tape<double> tape(false);
  auto ones = tape.constant(Tensor<double>({2}, 1.0));
  auto zeros = tape.constant(Tensor<double>({2}, 0.0));
  auto c = layernorm(tape.constant(Tensor<double>({1, 2}, 4.0)), ones, zeros);
  CHECK(c.value()[0] == 0.0);
  CHECK(c.value()[1] == 0.0);
  auto y = layernorm(tape.constant(Tensor<double>({1, 2}, {1.0, 3.0})), ones, zeros);
  CHECK(std::abs(y.value()[0] + 1.0) <= 2e-3);
  CHECK(std::abs(y.value()[1] - 1.0) <= 2e-3);

  const auto x = random_tensor<double>({6, 7}, 11, -3.0, 5.0);
  const auto g = random_tensor<double>({7}, 12);
  auto z = layernorm(tape.constant(x), tape.constant(g), tape.constant(Tensor<double>({7}, 0.25)));
  // sum_c gamma_c xhat_c is not zero, so check the un-scaled mean with gamma = 1
  auto z1 = layernorm(tape.constant(x), tape.constant(Tensor<double>({7}, 1.0)),
                      tape.constant(Tensor<double>({7}, 0.25)));
  for (int r = 0; r < 6; ++r) {
    double s = 0;
    for (int c2 = 0; c2 < 7; ++c2) s += z1.value().at({r, c2});
    CHECK(s / 7.0 == doctest::Approx(0.25).epsilon(1e-9));
  }
  CHECK(z.value().shape() == x.shape());
}

TEST_CASE("pixel_shuffle: shape, mosaic pattern, identity, inverse") {
  Tensor<double> x({1, 4, 2, 2});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) x.at({0, c, i, j}) = c;
  const auto y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(y.at({0, 0, i, j}) == (i % 2) * 2 + (j % 2));
  const auto r = random_tensor<double>({2, 3, 4, 5}, 13);
  CHECK(pixel_shuffle(r, 1) == r);
  const auto r9 = random_tensor<double>({1, 18, 3, 2}, 14);
  CHECK(pixel_unshuffle(pixel_shuffle(r9, 3), 3) == r9);
  CHECK_THROWS_AS(pixel_shuffle(Tensor<double>({1, 3, 2, 2}), 2), ShapeError);
}

TEST_CASE("dft2: DC bin, cosine bins vs naive DFT, Parseval, linearity") {
  const Tensor<double> c({4, 8}, 1.5);
  auto [re, im] = dft2(c);
  for (std::size_t i = 0; i < re.size(); ++i) {
    CHECK(std::abs(re[i] - (i == 0 ? 1.5 * 32 : 0.0)) <= 1e-6);
    CHECK(std::abs(im[i]) <= 1e-6);
  }

  const int H = 4, W = 16, u0 = 3;
  Tensor<double> x({H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) x.at({i, j}) = std::cos(2 * std::numbers::pi * u0 * j / W);
  auto [xr, xi] = dft2(x);
  for (int ku = 0; ku < H; ++ku)
    for (int kv = 0; kv < W; ++kv) {
      std::complex<double> s = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          s += x.at({i, j}) * std::polar(1.0, -2 * std::numbers::pi * (double(ku * i) / H + double(kv * j) / W));
      CHECK(std::abs(xr.at({ku, kv}) - s.real()) <= 1e-9);
      CHECK(std::abs(xi.at({ku, kv}) - s.imag()) <= 1e-9);
      const bool peak = ku == 0 && (kv == u0 || kv == W - u0);
      CHECK(std::abs(xr.at({ku, kv}) - (peak ? H * W / 2.0 : 0.0)) <= 1e-9);
    }

  const auto a = random_tensor<double>({2, 8, 8}, 15);
  const auto b = random_tensor<double>({2, 8, 8}, 16);
  auto [ar, ai] = dft2(a);
  double energy = 0, spec = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    energy += a[i] * a[i];
    spec += ar[i] * ar[i] + ai[i] * ai[i];
  }
  CHECK(std::abs(energy - spec / 64.0) <= 1e-5 * energy);

  Tensor<double> comb(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) comb[i] = 2.0 * a[i] - 0.5 * b[i];
  auto [cr, ci] = dft2(comb);
  auto [br, bi] = dft2(b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(cr[i] - (2.0 * ar[i] - 0.5 * br[i])) <= 1e-6 * (1 + std::abs(cr[i])));
    CHECK(std::abs(ci[i] - (2.0 * ai[i] - 0.5 * bi[i])) <= 1e-6 * (1 + std::abs(ci[i])));
  }
  CHECK_THROWS_AS(dft2(Tensor<double>({6, 8})), ConfigError);
}

TEST_CASE("bicubic_resize: constants, linear ramps, identity, invalid extents") {
  const Tensor<double> c({1, 2, 8, 8}, 0.3);
  const auto ch = bicubic_rescale(c, 1, 2);
  for (double v : ch.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));

  Tensor<double> ramp({1, 1, 16, 16});
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) ramp.at({0, 0, i, j}) = 0.1 * i + 0.03 * j;
  const auto half = bicubic_rescale(ramp, 1, 2);
  REQUIRE(half.shape() == Shape{1, 1, 8, 8});
  // Interior outputs whose 4-tap support stays inside the image.
  for (int i = 1; i < 7; ++i)
    for (int j = 1; j < 7; ++j) {
      // Per-pixel kernel-sum oracle: output (i, j) samples source 2i + 0.5.
      double s = 0;
      const double src = 2 * i + 0.5, srcj = 2 * j + 0.5;
      for (int u = -1; u <= 2; ++u)
        for (int v = -1; v <= 2; ++v) {
          auto w = [](double d) {
            d = std::abs(d);
            return d <= 1 ? 1.5 * d * d * d - 2.5 * d * d + 1
                          : (d < 2 ? -0.5 * d * d * d + 2.5 * d * d - 4 * d + 2 : 0.0);
          };
          const int si = 2 * i + u, sj = 2 * j + v;
          s += w(src - si) * w(srcj - sj) * ramp.at({0, 0, si, sj});
        }
      CHECK(std::abs(half.at({0, 0, i, j}) - s) <= 1e-12);
      CHECK(std::abs(half.at({0, 0, i, j}) - (0.1 * src + 0.03 * srcj)) <= 1e-5);
    }
  const auto r = random_tensor<double>({1, 1, 5, 7}, 17);
  CHECK(max_rel_diff(bicubic_rescale(r, 1, 1), r) == 0.0);
  CHECK_THROWS_AS(bicubic_resize(r, 0, 3), ConfigError);
}

TEST_CASE("backward: quadratic, linear map Jacobian, tape contract") {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2}, {1.0, 2.0}));
  tape.backward(sum(x * x));
  CHECK(x.grad().storage() == std::vector<double>{2.0, 4.0});
  CHECK_THROWS_AS(tape.backward(sum(x)), UsageError);

  // loss = sum(W x) for W in R^{2x3}: d/dW[i][j] = x[j]... expressed as x @ W here
  Tape<double> t2;
  auto xv = t2.constant(Tensor<double>({1, 3}, {0.5, -1.0, 2.0}));
  auto w = t2.variable(random_tensor<double>({3, 2}, 18));
  t2.backward(sum(linear(xv, w)));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) CHECK(w.grad().at({i, j}) == xv.value()[i]);

  Tape<double> t3;
  auto v = t3.variable(Tensor<double>({2}, 1.0));
  CHECK_THROWS_AS(t3.backward(v), UsageError);

  // Parameter gradients accumulate across tapes until zero_grad.
  Parameter<double> p(Tensor<double>({2}, {1.0, -3.0}));
  for (int rep = 0; rep < 2; ++rep) {
    Tape<double> t;
    auto pv = t.parameter(p);
    t.backward(sum(pv * pv));
  }
  CHECK(p.grad.storage() == std::vector<double>{4.0, -12.0});
  p.zero_grad();
  CHECK(p.grad.storage() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("grad_check: smooth, linear and detects wrong rules") {
  const auto x = random_tensor<double>({7}, 19, -2.0, 2.0);
  auto r = grad_check([](Tape<double>&, const Var<double>& v) { return sum(sin(v)); }, x,
                      {.tol = 1e-6});
  CHECK(r.pass);
  CHECK(r.checked == 7);
  auto lin = grad_check([](Tape<double>&, const Var<double>& v) { return sum(v); }, x);
  CHECK(lin.max_rel_err <= 1e-9);

  num::testing::set_corrupt_gelu_backward(true);
  auto bad = grad_check([](Tape<double>&, const Var<double>& v) { return sum(gelu(v)); }, x);
  num::testing::set_corrupt_gelu_backward(false);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("layout ops: roll, narrow/concat, pad/crop round trips") {
  Tape<double> tape(false);
  const auto x = random_tensor<double>({2, 5, 3}, 20);
  auto xv = tape.constant(x);
  CHECK(roll(roll(xv, 1, 2), 1, -2).value() == x);
  CHECK(roll(xv, 1, 0).value() == x);
  auto parts = concat<double>({narrow(xv, 1, 0, 2), narrow(xv, 1, 2, 3)}, 1);
  CHECK(parts.value() == x);
  auto img = tape.constant(random_tensor<double>({1, 2, 5, 6}, 21));
  auto padded = pad_reflect(img, 3, 2);
  CHECK(padded.shape() == Shape{1, 2, 8, 8});
  CHECK(padded.value().at({0, 1, 5, 7}) == img.value().at({0, 1, 3, 3}));
  CHECK(crop(padded, 5, 6).value() == img.value());
  CHECK_THROWS_AS(pad_reflect(img, 5, 0), ShapeError);
}
