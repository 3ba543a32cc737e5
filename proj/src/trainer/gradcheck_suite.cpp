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

#include <algorithm>
#include <cmath>
#include <functional>

#include "sfgsr/numerics/grad_check.hpp"
#include "sfgsr/trainer.hpp"

namespace sfgsr {

namespace {

using num::GradCheckOptions;
using num::GradCheckReport;
using num::Rng;
using num::Shape;
using D = double;
using OpFn = std::function<Var<D>(Tape<D>&, const Var<D>&, std::uint64_t)>;

Tensor<D> random(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Random linear functional of y, so every output component is exercised.
Var<D> probe(Tape<D>& tape, const Var<D>& y, std::uint64_t seed) {
  return num::sum(y * tape.constant(random(y.shape(), seed ^ 0x9B0BEULL)));
}

Var<D> konst(Tape<D>& tape, Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return tape.constant(random(std::move(shape), seed, lo, hi));
}

struct Domain {
  double lo = -1.0, hi = 1.0;
  // Values within 0.05 of this point are moved away, keeping the central
  // difference off a kink.
  std::optional<double> kink;
  // Round to multiples of 1/64. Differences of lattice values are exact, so a
  // kink in |a - b| is either hit exactly (where both sides agree on slope 0)
  // or at least 1/64 away from the evaluation point.
  bool lattice = false;
};

constexpr double kLattice = 64.0;

Tensor<D> on_lattice(Tensor<D> t) {
  for (auto& v : t.data()) v = std::round(v * kLattice) / kLattice;
  return t;
}

struct OpCase {
  std::string name;
  Shape shape;
  Domain domain;
  OpFn f;
};

Tensor<D> sample_input(const OpCase& c, std::uint64_t seed) {
  Tensor<D> x = random(c.shape, seed, c.domain.lo, c.domain.hi);
  if (c.domain.lattice) x = on_lattice(std::move(x));
  if (c.domain.kink) {
    for (auto& v : x.data()) {
      if (std::abs(v - *c.domain.kink) < 0.05) v = *c.domain.kink + (v < *c.domain.kink ? -0.1 : 0.1);
    }
  }
  return x;
}

class Collector {
 public:
  Collector(std::string scope, double tol) : scope_(std::move(scope)), tol_(tol) {}

  void add(const std::string& name, const GradCheckReport& r) {
    auto it = std::find_if(cases_.begin(), cases_.end(), [&](const auto& c) { return c.name == name; });
    if (it == cases_.end()) {
      cases_.push_back({scope_, name, 0.0, 0, true});
      it = cases_.end() - 1;
    }
    it->max_rel_err = std::max(it->max_rel_err, r.max_rel_err);
    it->checked += r.checked;
    it->pass = it->pass && r.pass;
  }
  GradCheckOptions options(std::uint64_t sample_seed, std::size_t max_components = 0) const {
    GradCheckOptions o;
    o.tol = tol_;
    o.max_components = max_components;
    o.sample_seed = sample_seed;
    return o;
  }
  std::vector<GradcheckCase> take() { return std::move(cases_); }

 private:
  std::string scope_;
  double tol_;
  std::vector<GradcheckCase> cases_;
};

void perturb(Parameter<D>& p, Rng& rng, double amount = 0.1) {
  for (auto& v : p.value.data()) v += rng.uniform(-amount, amount);
}

std::vector<OpCase> op_cases() {
  using namespace num;
  std::vector<OpCase> cs;
  const Domain any;
  const Domain pos{0.5, 2.0, {}};
  auto kinked = [](double k) { return Domain{-1.0, 1.0, k}; };
  auto binary = [&](const std::string& n, auto op, Domain other) {
    cs.push_back({n + ".lhs", {3, 4}, any, [op, other](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                    return probe(t, op(x, konst(t, {4}, s + 1, other.lo, other.hi)), s);
                  }});
    cs.push_back({n + ".rhs", {4}, other, [op](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                    return probe(t, op(konst(t, {3, 4}, s + 1), x), s);
                  }});
  };
  binary("add", [](const Var<D>& a, const Var<D>& b) { return a + b; }, any);
  binary("sub", [](const Var<D>& a, const Var<D>& b) { return a - b; }, any);
  binary("mul", [](const Var<D>& a, const Var<D>& b) { return a * b; }, any);
  binary("div", [](const Var<D>& a, const Var<D>& b) { return a / b; }, pos);
  auto unary = [&](const std::string& n, Domain dom, auto op) {
    cs.push_back({n, {3, 5}, dom, [op](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                    return probe(t, op(x), s);
                  }});
  };
  unary("add_scalar", any, [](const Var<D>& x) { return x + 0.75; });
  unary("mul_scalar", any, [](const Var<D>& x) { return x * -1.5; });
  unary("gelu", Domain{-3.0, 3.0, {}}, [](const Var<D>& x) { return gelu(x); });
  unary("sigmoid", Domain{-4.0, 4.0, {}}, [](const Var<D>& x) { return sigmoid(x); });
  unary("relu", kinked(0.0), [](const Var<D>& x) { return relu(x); });
  unary("leaky_relu", kinked(0.0), [](const Var<D>& x) { return leaky_relu(x, 0.1); });
  unary("abs", kinked(0.0), [](const Var<D>& x) { return num::abs(x); });
  unary("sqrt", pos, [](const Var<D>& x) { return num::sqrt(x); });
  unary("exp", any, [](const Var<D>& x) { return num::exp(x); });
  unary("sin", Domain{-3.0, 3.0, {}}, [](const Var<D>& x) { return num::sin(x); });
  unary("clamp_max", kinked(0.3), [](const Var<D>& x) { return clamp_max(x, 0.3); });
  unary("sum", any, [](const Var<D>& x) { return sum(x); });
  unary("mean", any, [](const Var<D>& x) { return mean(x); });
  unary("softmax.rows", Domain{-2.0, 2.0, {}}, [](const Var<D>& x) { return softmax(x, 1); });
  unary("softmax.cols", Domain{-2.0, 2.0, {}}, [](const Var<D>& x) { return softmax(x, 0); });
  unary("normalize_last", any, [](const Var<D>& x) { return normalize_last(x, 1e-6); });
  unary("reshape", any, [](const Var<D>& x) { return reshape(x, {5, 3}); });
  unary("roll", any, [](const Var<D>& x) { return roll(x, 1, -2); });
  unary("narrow", any, [](const Var<D>& x) { return narrow(x, 1, 1, 3); });
  unary("take_rows", any, [](const Var<D>& x) { return take_rows(x, {0, 2, 2, 1}); });

  cs.push_back({"linear.x", {2, 3, 4}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, linear(x, konst(t, {4, 5}, s + 1), konst(t, {5}, s + 2)), s);
                }});
  cs.push_back({"linear.weight", {4, 5}, any, [](Tape<D>& t, const Var<D>& w, std::uint64_t s) {
                  return probe(t, linear(konst(t, {2, 3, 4}, s + 1), w, konst(t, {5}, s + 2)), s);
                }});
  cs.push_back({"linear.bias", {5}, any, [](Tape<D>& t, const Var<D>& b, std::uint64_t s) {
                  return probe(t, linear(konst(t, {2, 3, 4}, s + 1), konst(t, {4, 5}, s + 2), b), s);
                }});
  for (bool tb : {false, true}) {
    const std::string n = tb ? "bmm_transposed" : "bmm";
    const Shape bshape = tb ? Shape{2, 5, 4} : Shape{2, 4, 5};
    cs.push_back({n + ".lhs", {2, 3, 4}, any, [tb, bshape](Tape<D>& t, const Var<D>& a, std::uint64_t s) {
                    return probe(t, bmm(a, konst(t, bshape, s + 1), tb), s);
                  }});
    cs.push_back({n + ".rhs", bshape, any, [tb](Tape<D>& t, const Var<D>& b, std::uint64_t s) {
                    return probe(t, bmm(konst(t, {2, 3, 4}, s + 1), b, tb), s);
                  }});
  }
  cs.push_back({"permute", {2, 3, 4}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, permute(x, {2, 0, 1}), s);
                }});
  cs.push_back({"concat", {2, 3, 4}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, concat<D>({konst(t, {2, 2, 4}, s + 1), x, x}, 1), s);
                }});
  cs.push_back({"pad_reflect", {1, 2, 4, 4}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, pad_reflect(x, 2, 3), s);
                }});
  cs.push_back({"crop", {1, 2, 5, 5}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, crop(x, 3, 4), s);
                }});
  cs.push_back({"forward_diff.rows", {1, 2, 4, 5}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, forward_diff(x, 2), s);
                }});
  cs.push_back({"forward_diff.cols", {1, 2, 4, 5}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, forward_diff(x, 3), s);
                }});
  for (auto pad : {PadMode::kZero, PadMode::kReplicate}) {
    const std::string n = pad == PadMode::kZero ? "depthwise_conv2d.zero" : "depthwise_conv2d.replicate";
    cs.push_back({n + ".x", {1, 2, 5, 5}, any, [pad](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                    return probe(t, depthwise_conv2d(x, konst(t, {2, 3, 3}, s + 1), pad, konst(t, {2}, s + 2)), s);
                  }});
    cs.push_back({n + ".kernel", {2, 3, 3}, any, [pad](Tape<D>& t, const Var<D>& k, std::uint64_t s) {
                    return probe(t, depthwise_conv2d(konst(t, {1, 2, 5, 5}, s + 1), k, pad, konst(t, {2}, s + 2)), s);
                  }});
    cs.push_back({n + ".bias", {2}, any, [pad](Tape<D>& t, const Var<D>& b, std::uint64_t s) {
                    return probe(t, depthwise_conv2d(konst(t, {1, 2, 5, 5}, s + 1), konst(t, {2, 3, 3}, s + 2), pad, b), s);
                  }});
  }
  cs.push_back({"conv2d.x", {1, 2, 5, 5}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, conv2d(x, konst(t, {3, 2, 3, 3}, s + 1), konst(t, {3}, s + 2)), s);
                }});
  cs.push_back({"conv2d.kernel", {3, 2, 3, 3}, any, [](Tape<D>& t, const Var<D>& k, std::uint64_t s) {
                  return probe(t, conv2d(konst(t, {1, 2, 5, 5}, s + 1), k, konst(t, {3}, s + 2)), s);
                }});
  cs.push_back({"conv2d.bias", {3}, any, [](Tape<D>& t, const Var<D>& b, std::uint64_t s) {
                  return probe(t, conv2d(konst(t, {1, 2, 5, 5}, s + 1), konst(t, {3, 2, 3, 3}, s + 2), b), s);
                }});
  cs.push_back({"filter2d_valid", {1, 2, 6, 6}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, filter2d_valid(x, random({3, 3}, s + 1)), s);
                }});
  cs.push_back({"pixel_shuffle", {1, 8, 3, 3}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, pixel_shuffle(x, 2), s);
                }});
  cs.push_back({"layernorm.x", {3, 6}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  return probe(t, layernorm(x, konst(t, {6}, s + 1), konst(t, {6}, s + 2)), s);
                }});
  cs.push_back({"layernorm.gamma", {6}, any, [](Tape<D>& t, const Var<D>& g, std::uint64_t s) {
                  return probe(t, layernorm(konst(t, {3, 6}, s + 1), g, konst(t, {6}, s + 2)), s);
                }});
  cs.push_back({"layernorm.beta", {6}, any, [](Tape<D>& t, const Var<D>& b, std::uint64_t s) {
                  return probe(t, layernorm(konst(t, {3, 6}, s + 1), konst(t, {6}, s + 2), b), s);
                }});
  cs.push_back({"dft2", {1, 2, 4, 8}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  auto [re, im] = dft2(x);
                  return probe(t, re, s) + probe(t, im, s + 7);
                }});
  // The mask is redrawn from the same key on every evaluation.
  cs.push_back({"dropout", {4, 6}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  Rng rng(s + 11);
                  return probe(t, dropout(x, 0.3, rng), s);
                }});
  cs.push_back({"drop_path", {6, 2, 3}, any, [](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                  Rng rng(s + 13);
                  return probe(t, drop_path(x, 0.5, rng), s);
                }});
  return cs;
}

std::vector<OpCase> objective_cases() {
  std::vector<OpCase> cs;
  const Domain unit{0.0, 1.0, {}, true};
  auto pair_case = [&](const std::string& n, Shape shape, auto loss) {
    cs.push_back({n, shape, unit, [loss, shape](Tape<D>& t, const Var<D>& x, std::uint64_t s) {
                    return loss(x, t.constant(on_lattice(random(shape, s + 1, 0.0, 1.0))));
                  }});
  };
  pair_case("l1_loss", {1, 2, 12, 12}, [](const Var<D>& a, const Var<D>& b) { return l1_loss(a, b); });
  pair_case("ssim_loss", {2, 1, 12, 12}, [](const Var<D>& a, const Var<D>& b) { return ssim_loss(a, b); });
  pair_case("edge_loss", {1, 2, 8, 9}, [](const Var<D>& a, const Var<D>& b) { return edge_loss(a, b); });
  pair_case("freq_loss", {1, 2, 8, 8}, [](const Var<D>& a, const Var<D>& b) { return freq_loss(a, b); });
  pair_case("freq_loss.padded", {1, 1, 6, 5}, [](const Var<D>& a, const Var<D>& b) { return freq_loss(a, b); });
  pair_case("freq_loss.amplitude", {1, 2, 8, 8}, [](const Var<D>& a, const Var<D>& b) {
    return freq_loss(a, b, FreqOptions{true, true});
  });
  pair_case("total_loss", {1, 3, 12, 12}, [](const Var<D>& a, const Var<D>& b) {
    return total_loss(a, b, LossWeights{}).total;
  });
  return cs;
}

void run_ops(Collector& col, const std::vector<OpCase>& cases, int seeds) {
  for (const auto& c : cases) {
    for (int k = 1; k <= seeds; ++k) {
      const auto seed = static_cast<std::uint64_t>(k) * 1000003ULL;
      const Tensor<D> x = sample_input(c, seed);
      const OpFn& f = c.f;
      col.add(c.name, num::grad_check([&](Tape<D>& t, const Var<D>& v) { return f(t, v, seed); }, x,
                                      col.options(seed)));
    }
  }
}

// Checks the input and every parameter of a module under `loss`.
template <typename Params>
void check_module(Collector& col, const std::string& prefix, Params& params, const Tensor<D>& input,
                  const std::function<Var<D>(Tape<D>&, const Var<D>&)>& loss, std::uint64_t seed,
                  std::size_t max_components) {
  col.add(prefix + "input", num::grad_check(loss, input, col.options(seed, max_components)));
  std::uint64_t k = 0;
  params.for_each_parameter([&](const std::string& name, Parameter<D>& p) {
    auto bound = [&](Tape<D>& t) { return loss(t, t.constant(input)); };
    col.add(prefix + name, num::grad_check_parameter(bound, p, col.options(seed + ++k, max_components)));
  });
}

// Adapts a prefix-taking parameter visitor to the check_module interface.
template <typename P>
struct Prefixed {
  P& p;
  template <typename F>
  void for_each_parameter(F&& f) {
    p.for_each_parameter("", f);
  }
};

void run_sfg_ffn(Collector& col, int seeds) {
  for (int k = 1; k <= seeds; ++k) {
    const auto seed = static_cast<std::uint64_t>(k) * 7919ULL;
    Rng rng(seed);
    auto p = sfg_ffn_init<D>(4, 2.0, 3, 8.0, seed);
    p.for_each_parameter("", [&](const std::string&, Parameter<D>& q) { perturb(q, rng); });
    const Tensor<D> x = random({2, 16, 4}, seed + 1);
    Prefixed<SfgFfnParams<D>> view{p};
    check_module(col, "sfg_ffn.", view, x,
                 [&](Tape<D>& t, const Var<D>& v) { return probe(t, sfg_ffn_forward(v, p, 4, 4), seed); },
                 seed, 0);
    auto b = baseline_mlp_init<D>(4, 2.0, seed);
    b.for_each_parameter("", [&](const std::string&, Parameter<D>& q) { perturb(q, rng); });
    Prefixed<BaselineMlpParams<D>> bview{b};
    check_module(col, "baseline_mlp.", bview, x,
                 [&](Tape<D>& t, const Var<D>& v) { return probe(t, baseline_mlp_forward(v, b), seed); },
                 seed, 0);
  }
}

// Shifts each hidden bias of the position-bias MLP until every ReLU input is
// at least `margin` from zero, so finite-difference steps never cross a kink.
void clear_relu_kinks(SwinBlockParams<D>& p, double margin = 1e-3) {
  if (p.cpb1_w.value.empty()) return;
  const Tensor<D> coords = relative_coords_table<D>(p.window);
  const auto rows = static_cast<std::int64_t>(coords.size() / 2);
  const auto hidden = p.cpb1_w.value.dim(1);
  for (std::int64_t j = 0; j < hidden; ++j) {
    for (bool clear = false; !clear;) {
      clear = true;
      for (std::int64_t r = 0; r < rows && clear; ++r) {
        const double a = coords[2 * r] * p.cpb1_w.value.at({0, j}) +
                         coords[2 * r + 1] * p.cpb1_w.value.at({1, j}) + p.cpb1_b.value[j];
        clear = std::abs(a) >= margin;
      }
      if (!clear) p.cpb1_b.value[j] += 2 * margin;
    }
  }
}

void run_swin(Collector& col, int seeds) {
  for (int k = 1; k <= seeds; ++k) {
    const auto seed = static_cast<std::uint64_t>(k) * 104729ULL;
    for (int variant = 0; variant < 2; ++variant) {
      SwinBlockSpec spec;
      spec.channels = 8;
      spec.heads = 2;
      spec.window = 4;
      spec.shift = variant == 0 ? 2 : 0;
      spec.blur_k = 3;
      spec.ffn = variant == 0 ? FfnKind::kSfg : FfnKind::kBaseline;
      spec.bias_mode = variant == 0 ? PositionBias::kContinuous : PositionBias::kTable;
      spec.bias_hidden = 16;
      auto p = swin_block_init<D>(spec, seed);
      Rng rng(seed + 5);
      p.for_each_parameter("", [&](const std::string&, Parameter<D>& q) { perturb(q, rng); });
      clear_relu_kinks(p);
      const Tensor<D> x = random({1, 64, 8}, seed + 1);
      Prefixed<SwinBlockParams<D>> view{p};
      const std::string prefix = variant == 0 ? "swin.shifted." : "swin.plain.";
      check_module(col, prefix, view, x,
                   [&](Tape<D>& t, const Var<D>& v) { return probe(t, swin_block_forward(v, p, 8, 8), seed); },
                   seed, 16);
    }
  }
}

void run_model(Collector& col, int seeds) {
  for (int k = 1; k <= seeds; ++k) {
    const auto seed = static_cast<std::uint64_t>(k) * 15485863ULL;
    ModelConfig cfg = ModelConfig::tiny();
    cfg.window = 4;
    cfg.embed_dim = 8;
    cfg.upsample_features = 8;
    cfg.blur_k = 3;
    cfg.seed = seed;
    auto m = build_model<D>(cfg);
    Rng rng(seed + 3);
    m.for_each_parameter([&](const std::string&, Parameter<D>& q) { perturb(q, rng, 0.05); });
    const Tensor<D> lr = random({1, 3, 8, 8}, seed + 1, 0.0, 1.0);
    const Tensor<D> hr = random({1, 3, 16, 16}, seed + 2, 0.0, 1.0);
    check_module(col, "model.", m, lr,
                 [&](Tape<D>& t, const Var<D>& v) {
                   return total_loss(model_forward(v, m), t.constant(hr), LossWeights{}).total;
                 },
                 seed, 6);
  }
}

}  // namespace

std::vector<std::string> gradcheck_scopes() { return {"numerics", "objective", "sfg_ffn", "swin", "model"}; }

std::vector<GradcheckCase> run_gradcheck_suite(const std::string& scope, const GradcheckSuiteOptions& opts) {
  const auto scopes = gradcheck_scopes();
  if (scope != "all" && std::find(scopes.begin(), scopes.end(), scope) == scopes.end()) {
    std::string known;
    for (const auto& s : scopes) known += s + ", ";
    throw ConfigError("unknown gradcheck scope '" + scope + "' (expected " + known + "all)");
  }
  if (opts.seeds < 1) throw ConfigError("gradcheck: seeds must be >= 1");
  std::vector<GradcheckCase> out;
  auto wanted = [&](const char* s) { return scope == "all" || scope == s; };
  auto append = [&](Collector& c) {
    auto v = c.take();
    out.insert(out.end(), v.begin(), v.end());
  };
  if (wanted("numerics")) {
    Collector c("numerics", opts.tol);
    run_ops(c, op_cases(), opts.seeds);
    append(c);
  }
  if (wanted("objective")) {
    Collector c("objective", opts.tol);
    run_ops(c, objective_cases(), opts.seeds);
    append(c);
  }
  if (wanted("sfg_ffn")) {
    Collector c("sfg_ffn", opts.tol);
    run_sfg_ffn(c, opts.seeds);
    append(c);
  }
  if (wanted("swin")) {
    Collector c("swin", opts.tol);
    run_swin(c, opts.seeds);
    append(c);
  }
  if (wanted("model")) {
    Collector c("model", opts.end_to_end_tol);
    run_model(c, opts.seeds);
    append(c);
  }
  return out;
}

}  // namespace sfgsr
