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

#include "sfgsr/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "sfgsr/numerics/rng.hpp"

namespace sfgsr::num {

namespace {

std::vector<std::size_t> pick_components(std::size_t n, const GradCheckOptions& opts) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (opts.max_components == 0 || opts.max_components >= n) return idx;
  Rng rng(opts.sample_seed);
  for (std::size_t i = 0; i < opts.max_components; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  }
  idx.resize(opts.max_components);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename Eval>
GradCheckReport compare(Tensor<double>& x, const Tensor<double>& analytic, Eval&& eval,
                        const GradCheckOptions& opts) {
  GradCheckReport rep;
  for (std::size_t i : pick_components(x.size(), opts)) {
    const double orig = x[i];
    x[i] = orig + opts.h;
    const double fp = eval();
    x[i] = orig - opts.h;
    const double fm = eval();
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * opts.h);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
    rep.max_rel_err = std::max(rep.max_rel_err, err);
    ++rep.checked;
  }
  rep.pass = rep.max_rel_err <= opts.tol;
  return rep;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Tensor<double>& x0,
                           const GradCheckOptions& opts) {
  Tensor<double> analytic;
  {
    Tape<double> tape;
    Var<double> xv = tape.variable(x0);
    Var<double> loss = f(tape, xv);
    tape.backward(loss);
    analytic = tape.has_grad(xv.id()) ? tape.grad(xv.id()) : Tensor<double>(x0.shape());
  }
  Tensor<double> x = x0;
  auto eval = [&] {
    Tape<double> tape(false);
    return f(tape, tape.constant(x)).value()[0];
  };
  return compare(x, analytic, eval, opts);
}

GradCheckReport grad_check_parameter(const LossFn& loss, Parameter<double>& p,
                                     const GradCheckOptions& opts) {
  p.grad = Tensor<double>(p.value.shape());
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  const Tensor<double> analytic = p.grad;
  auto eval = [&] {
    Tape<double> tape(false);
    return loss(tape).value()[0];
  };
  return compare(p.value, analytic, eval, opts);
}

}  // namespace sfgsr::num
