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
#include <functional>

#include "sfgsr/numerics/tape.hpp"
#include "sfgsr/numerics/tensor.hpp"

namespace sfgsr::num {

struct GradCheckOptions {
  double h = 1e-5;  // central-difference step
  double tol = 1e-4;
  // Check at most this many components (0 = all); picked by sample_seed.
  std::size_t max_components = 0;
  std::uint64_t sample_seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;  // max |g_analytic - g_fd| / max(1, |g_fd|)
  std::size_t checked = 0;
  bool pass = true;
};

using ScalarFn = std::function<Var<double>(Tape<double>&, const Var<double>&)>;
using LossFn = std::function<Var<double>(Tape<double>&)>;

// Compares the tape gradient of f at x with central differences.
GradCheckReport grad_check(const ScalarFn& f, const Tensor<double>& x,
                           const GradCheckOptions& opts = {});

// Same, for a parameter that `loss` binds onto its tape. The parameter value
// is restored on return; its grad is left holding the analytic gradient.
GradCheckReport grad_check_parameter(const LossFn& loss, Parameter<double>& p,
                                     const GradCheckOptions& opts = {});

}  // namespace sfgsr::num
