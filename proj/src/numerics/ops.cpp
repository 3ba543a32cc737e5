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

#include "sfgsr/numerics/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

namespace sfgsr::num {

namespace testing {
namespace {
std::atomic<bool> g_corrupt_gelu{false};
}
void set_corrupt_gelu_backward(bool on) { g_corrupt_gelu = on; }
bool corrupt_gelu_backward() { return g_corrupt_gelu; }
}  // namespace testing

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

using Index = std::vector<std::size_t>;

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * static_cast<std::size_t>(s[i]);
  return st;
}

// Visits every element of `shape` in row-major order, passing the linear
// index and the offset under `strides`.
template <typename F>
void odometer(const Shape& shape, const std::vector<std::size_t>& strides, F&& f) {
  const std::size_t n = numel(shape);
  const std::size_t r = shape.size();
  std::vector<std::int64_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t lin = 0; lin < n; ++lin) {
    f(lin, off);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < shape[d]) {
        off += strides[d];
        break;
      }
      off -= strides[d] * static_cast<std::size_t>(shape[d] - 1);
      idx[d] = 0;
    }
  }
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
  }
  return out;
}

// Offsets of each output element inside an operand of shape `in`.
Index broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t r = out.size();
  const auto in_st = strides_of(in);
  std::vector<std::size_t> st(r, 0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t o = r - in.size() + i;
    st[o] = in[i] == 1 ? 0 : in_st[i];
  }
  Index offs(numel(out));
  odometer(out, st, [&](std::size_t lin, std::size_t off) { offs[lin] = off; });
  return offs;
}

// Broadcasting binary op. `fwd(a, b)` gives the value, `part(a, b, y)` the
// pair of partial derivatives (dy/da, dy/db).
template <typename T, typename Fwd, typename Part>
Var<T> binary_op(const Var<T>& a, const Var<T>& b, Fwd fwd, Part part) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const bool same = a.shape() == b.shape();
  std::shared_ptr<const Index> ia, ib;
  if (!same) {
    ia = std::make_shared<Index>(broadcast_offsets(out_shape, a.shape()));
    ib = std::make_shared<Index>(broadcast_offsets(out_shape, b.shape()));
  }
  Tensor<T> y(out_shape);
  const auto av = a.value().data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = same ? fwd(av[i], bv[i]) : fwd(av[(*ia)[i]], bv[(*ib)[i]]);
  }
  return a.tape().record(std::move(y), {a, b}, [same, ia, ib, part](auto& ctx) {
    const auto& gy = ctx.out_grad();
    const auto& yv = ctx.out_value();
    const auto& av = ctx.in_value(0);
    const auto& bv = ctx.in_value(1);
    const bool na = ctx.needs(0), nb = ctx.needs(1);
    Tensor<T>* ga = na ? &ctx.in_grad(0) : nullptr;
    Tensor<T>* gb = nb ? &ctx.in_grad(1) : nullptr;
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const std::size_t oa = same ? i : (*ia)[i];
      const std::size_t ob = same ? i : (*ib)[i];
      const auto [da, db] = part(av[oa], bv[ob], yv[i]);
      if (na) (*ga)[oa] += gy[i] * da;
      if (nb) (*gb)[ob] += gy[i] * db;
    }
  });
}

// Elementwise op; `deriv(x, y)` is dy/dx.
template <typename T, typename Fwd, typename Deriv>
Var<T> unary_op(const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> y(x.shape());
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
  return x.tape().record(std::move(y), {x}, [deriv](auto& ctx) {
    const auto& gy = ctx.out_grad();
    const auto& yv = ctx.out_value();
    const auto& xv = ctx.in_value(0);
    auto& gx = ctx.in_grad(0);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
  });
}

// C[M,N] += op(A) op(B); A is [M,K] (or [K,M] when ta), B is [K,N] (or [N,K] when tb).
template <typename T>
void gemm_acc(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
              const T* b, T* c) {
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      T* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        const T* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* ai = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const T* bj = b + j * k;
        T s = 0;
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
        c[i * n + j] += s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* ap = a + p * m;
      const T* bp = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const T av = ap[i];
        T* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T s = 0;
        for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
        c[i * n + j] += s;
      }
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= static_cast<std::size_t>(s[i]);
  r.n = static_cast<std::size_t>(s[axis]);
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= static_cast<std::size_t>(s[i]);
  return r;
}

void require_rank(const Shape& s, std::size_t r, const char* what) {
  if (s.size() != r) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(r) + ", got " +
                     to_string(s));
  }
}

void require_odd_square(const Shape& k, std::size_t first, const char* what) {
  if (k[first] != k[first + 1]) {
    throw ConfigError(std::string(what) + " kernel must be square, got " + to_string(k));
  }
  if (k[first] % 2 == 0) {
    throw ConfigError(std::string(what) + " kernel size must be odd, got " +
                      std::to_string(k[first]));
  }
}

// Source index for each output position and tap offset of a same-size
// convolution; -1 marks a zero-padded tap.
std::vector<std::int64_t> tap_map(std::int64_t n, std::int64_t k, PadMode pad) {
  const std::int64_t p = k / 2;
  std::vector<std::int64_t> m(static_cast<std::size_t>(n * k));
  for (std::int64_t t = 0; t < k; ++t) {
    for (std::int64_t i = 0; i < n; ++i) {
      std::int64_t s = i + t - p;
      if (s < 0 || s >= n) s = pad == PadMode::kReplicate ? std::clamp<std::int64_t>(s, 0, n - 1) : -1;
      m[static_cast<std::size_t>(t * n + i)] = s;
    }
  }
  return m;
}

template <typename T>
void dwconv_forward(const Tensor<T>& x, const Tensor<T>& k, PadMode pad, Tensor<T>& y) {
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), K = k.dim(1);
  const auto rows = tap_map(H, K, pad), cols = tap_map(W, K, pad);
  // Widened accumulation keeps a normalized box kernel DC-exact for k <= 5.
  using Acc = std::conditional_t<std::is_same_v<T, float>, double, long double>;
  std::vector<Acc> acc(static_cast<std::size_t>(H * W));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const T* in = x.data().data() + (b * C + c) * H * W;
      T* out = y.data().data() + (b * C + c) * H * W;
      const T* kc = k.data().data() + c * K * K;
      std::fill(acc.begin(), acc.end(), Acc(0));
      for (std::int64_t ky = 0; ky < K; ++ky) {
        for (std::int64_t kx = 0; kx < K; ++kx) {
          const Acc w = kc[ky * K + kx];
          const std::int64_t* cm = cols.data() + kx * W;
          for (std::int64_t i = 0; i < H; ++i) {
            const std::int64_t sy = rows[static_cast<std::size_t>(ky * H + i)];
            if (sy < 0) continue;
            const T* src = in + sy * W;
            Acc* dst = acc.data() + i * W;
            for (std::int64_t j = 0; j < W; ++j) {
              if (cm[j] >= 0) dst[j] += w * static_cast<Acc>(src[cm[j]]);
            }
          }
        }
      }
      for (std::int64_t i = 0; i < H * W; ++i) out[i] = static_cast<T>(acc[static_cast<std::size_t>(i)]);
    }
  }
}

template <typename T>
void dwconv_backward(const Tensor<T>& x, const Tensor<T>& k, PadMode pad, const Tensor<T>& gy,
                     Tensor<T>* gx, Tensor<T>* gk) {
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), K = k.dim(1);
  const auto rows = tap_map(H, K, pad), cols = tap_map(W, K, pad);
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const std::int64_t base = (b * C + c) * H * W;
      const T* in = x.data().data() + base;
      const T* g = gy.data().data() + base;
      T* gin = gx ? gx->data().data() + base : nullptr;
      const T* kc = k.data().data() + c * K * K;
      T* gkc = gk ? gk->data().data() + c * K * K : nullptr;
      for (std::int64_t ky = 0; ky < K; ++ky) {
        for (std::int64_t kx = 0; kx < K; ++kx) {
          const T w = kc[ky * K + kx];
          const std::int64_t* cm = cols.data() + kx * W;
          T acc = 0;
          for (std::int64_t i = 0; i < H; ++i) {
            const std::int64_t sy = rows[static_cast<std::size_t>(ky * H + i)];
            if (sy < 0) continue;
            for (std::int64_t j = 0; j < W; ++j) {
              const std::int64_t sx = cm[j];
              if (sx < 0) continue;
              const T gv = g[i * W + j];
              if (gin) gin[sy * W + sx] += w * gv;
              acc += gv * in[sy * W + sx];
            }
          }
          if (gkc) gkc[ky * K + kx] += acc;
        }
      }
    }
  }
}

void fft_inplace(std::vector<std::complex<double>>& a, std::size_t offset, std::size_t stride,
                 std::size_t n, bool inverse) {
  // Gather, transform, scatter: keeps the radix-2 kernel contiguous.
  std::vector<std::complex<double>> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a[offset + i * stride];
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> w(std::cos(ang * static_cast<double>(j)),
                                     std::sin(ang * static_cast<double>(j)));
        const auto u = v[i + j];
        const auto t = v[i + j + len / 2] * w;
        v[i + j] = u + t;
        v[i + j + len / 2] = u - t;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) a[offset + i * stride] = v[i];
}

// Unnormalized 2D transform of every trailing [H, W] plane.
void fft2_planes(std::vector<std::complex<double>>& a, std::size_t planes, std::size_t h,
                 std::size_t w, bool inverse) {
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t r = 0; r < h; ++r) fft_inplace(a, base + r * w, 1, w, inverse);
    for (std::size_t c = 0; c < w; ++c) fft_inplace(a, base + c, w, h, inverse);
  }
}

void check_fft_dims(const Shape& s) {
  if (s.size() < 2) throw ShapeError("dft2 needs at least 2 dims, got " + to_string(s));
  const auto h = s[s.size() - 2], w = s[s.size() - 1];
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw ConfigError("dft2 requires power-of-two extents, got " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
}

double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// Resample one axis: out[o] = sum_t w[o][t] in[idx[o][t]].
struct ResampleTable {
  std::vector<std::int64_t> idx;
  std::vector<double> w;
};

ResampleTable resample_table(std::int64_t in, std::int64_t out) {
  ResampleTable t;
  t.idx.resize(static_cast<std::size_t>(out * 4));
  t.w.resize(static_cast<std::size_t>(out * 4));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double f = std::floor(src);
    const double frac = src - f;
    const auto i0 = static_cast<std::int64_t>(f);
    for (int k = 0; k < 4; ++k) {
      const auto s = static_cast<std::size_t>(o * 4 + k);
      t.idx[s] = std::clamp<std::int64_t>(i0 - 1 + k, 0, in - 1);
      t.w[s] = cubic_weight(frac - static_cast<double>(k - 1));
    }
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x + y; },
                   [](T, T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x - y; },
                   [](T, T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x * y; },
                   [](T x, T y, T) { return std::pair<T, T>{y, x}; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x / y; },
                   [](T, T y, T q) { return std::pair<T, T>{T(1) / y, -q / y}; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T c) {
  return unary_op(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& x, T c) {
  return unary_op(x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  return unary_op(
      x,
      [](T v) {
        const double d = static_cast<double>(v);
        return static_cast<T>(0.5 * d * (1.0 + std::erf(d / std::numbers::sqrt2)));
      },
      [](T v, T) {
        const double d = static_cast<double>(v);
        const double cdf = 0.5 * (1.0 + std::erf(d / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * d * d) / std::sqrt(2.0 * std::numbers::pi);
        double g = cdf + d * pdf;
        if (testing::corrupt_gelu_backward()) g *= 1.1;
        return static_cast<T>(g);
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary_op(
      x,
      [](T v) {
        return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary_op(x, [](T v) { return v > 0 ? v : T(0); },
                  [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary_op(x, [slope](T v) { return v > 0 ? v : slope * v; },
                  [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  return unary_op(x, [](T v) { return std::abs(v); },
                  [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  return unary_op(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> sin(const Var<T>& x) {
  return unary_op(x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Var<T> clamp_max(const Var<T>& x, T hi) {
  return unary_op(x, [hi](T v) { return std::min(v, hi); },
                  [hi](T v, T) { return v < hi ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  long double s = 0;
  for (T v : x.value().data()) s += v;
  return x.tape().record(Tensor<T>::scalar(static_cast<T>(s)), {x}, [](auto& ctx) {
    const T g = ctx.out_grad()[0];
    for (auto& v : ctx.in_grad(0).data()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const auto n = static_cast<T>(x.value().size());
  long double s = 0;
  for (T v : x.value().data()) s += v;
  return x.tape().record(Tensor<T>::scalar(static_cast<T>(s / n)), {x}, [n](auto& ctx) {
    const T g = ctx.out_grad()[0] / n;
    for (auto& v : ctx.in_grad(0).data()) v += g;
  });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.size() != 2 || xs.empty() || xs.back() != ws[0]) {
    throw ShapeError("linear: input " + to_string(xs) + " incompatible with weight " +
                     to_string(ws));
  }
  if (b && (b->rank() != 1 || b->dim(0) != ws[1])) {
    throw ShapeError("linear: bias " + to_string(b->shape()) + " incompatible with weight " +
                     to_string(ws));
  }
  const auto cin = static_cast<std::size_t>(ws[0]), cout = static_cast<std::size_t>(ws[1]);
  const std::size_t rows = x.value().size() / cin;
  Shape ys = xs;
  ys.back() = ws[1];
  Tensor<T> y(ys);
  if (b) {
    const auto bv = b->value().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), y.data().begin() + r * cout);
  }
  gemm_acc<T>(false, false, rows, cout, cin, x.value().data().data(), w.value().data().data(),
              y.data().data());
  std::vector<Var<T>> inputs{x, w};
  if (b) inputs.push_back(*b);
  const bool has_bias = b.has_value();
  return x.tape().record(std::move(y), inputs, [rows, cin, cout, has_bias](auto& ctx) {
    const T* gy = ctx.out_grad().data().data();
    if (ctx.needs(0)) {
      gemm_acc<T>(false, true, rows, cin, cout, gy, ctx.in_value(1).data().data(),
                  ctx.in_grad(0).data().data());
    }
    if (ctx.needs(1)) {
      gemm_acc<T>(true, false, cin, cout, rows, ctx.in_value(0).data().data(), gy,
                  ctx.in_grad(1).data().data());
    }
    if (has_bias && ctx.needs(2)) {
      auto gb = ctx.in_grad(2).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cout; ++j) gb[j] += gy[r * cout + j];
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const bool ok = as.size() >= 2 && as.size() == bs.size() &&
                  std::equal(as.begin(), as.end() - 2, bs.begin()) &&
                  as.back() == (transpose_b ? bs.back() : bs[bs.size() - 2]);
  if (!ok) {
    throw ShapeError("bmm: incompatible operands " + to_string(as) + " and " + to_string(bs) +
                     (transpose_b ? " (b transposed)" : ""));
  }
  const auto m = static_cast<std::size_t>(as[as.size() - 2]);
  const auto k = static_cast<std::size_t>(as.back());
  const auto n = static_cast<std::size_t>(transpose_b ? bs[bs.size() - 2] : bs.back());
  const std::size_t batch = a.value().size() / (m * k);
  Shape ys(as.begin(), as.end() - 1);
  ys.push_back(static_cast<std::int64_t>(n));
  Tensor<T> y(ys);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_acc<T>(false, transpose_b, m, n, k, a.value().data().data() + i * m * k,
                b.value().data().data() + i * k * n, y.data().data() + i * m * n);
  }
  return a.tape().record(std::move(y), {a, b}, [m, n, k, batch, transpose_b](auto& ctx) {
    const T* gy = ctx.out_grad().data().data();
    const T* av = ctx.in_value(0).data().data();
    const T* bv = ctx.in_value(1).data().data();
    T* ga = ctx.needs(0) ? ctx.in_grad(0).data().data() : nullptr;
    T* gb = ctx.needs(1) ? ctx.in_grad(1).data().data() : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      const T* g = gy + i * m * n;
      if (ga) {
        // dA = dY B^T, or dY B when B was used transposed
        gemm_acc<T>(false, !transpose_b, m, k, n, g, bv + i * k * n, ga + i * m * k);
      }
      if (gb) {
        if (transpose_b) {
          gemm_acc<T>(true, false, n, k, m, g, av + i * m * k, gb + i * k * n);
        } else {
          gemm_acc<T>(true, false, k, n, m, av + i * m * k, g, gb + i * k * n);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// layout

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (numel(shape) != x.value().size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Tensor<T> y(std::move(shape), x.value().storage());
  return x.tape().record(std::move(y), {x}, [](auto& ctx) {
    auto gx = ctx.in_grad(0).data();
    const auto gy = ctx.out_grad().data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& xs = x.shape();
  if (perm.size() != xs.size()) {
    throw ShapeError("permute: order of length " + std::to_string(perm.size()) +
                     " for tensor " + to_string(xs));
  }
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("permute: invalid axis order");
    seen[p] = true;
  }
  const auto in_st = strides_of(xs);
  Shape ys(xs.size());
  std::vector<std::size_t> st(xs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    ys[i] = xs[perm[i]];
    st[i] = in_st[perm[i]];
  }
  auto offs = std::make_shared<Index>(numel(ys));
  odometer(ys, st, [&](std::size_t lin, std::size_t off) { (*offs)[lin] = off; });
  Tensor<T> y(ys);
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[(*offs)[i]];
  return x.tape().record(std::move(y), {x}, [offs](auto& ctx) {
    auto& gx = ctx.in_grad(0);
    const auto& gy = ctx.out_grad();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[(*offs)[i]] += gy[i];
  });
}

template <typename T>
Var<T> narrow(const Var<T>& x, std::size_t axis, std::int64_t start, std::int64_t length) {
  const auto sp = split_at(x.shape(), axis);
  if (start < 0 || length < 0 || static_cast<std::size_t>(start + length) > sp.n) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis " + std::to_string(axis) +
                     " of " + to_string(x.shape()));
  }
  Shape ys = x.shape();
  ys[axis] = length;
  Tensor<T> y(ys);
  const auto L = static_cast<std::size_t>(length), s0 = static_cast<std::size_t>(start);
  const auto xv = x.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.begin() + (o * sp.n + s0) * sp.inner, L * sp.inner,
                y.data().begin() + o * L * sp.inner);
  }
  return x.tape().record(std::move(y), {x}, [sp, L, s0](auto& ctx) {
    auto gx = ctx.in_grad(0).data();
    const auto gy = ctx.out_grad().data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < L * sp.inner; ++i)
        gx[(o * sp.n + s0) * sp.inner + i] += gy[o * L * sp.inner + i];
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  Shape ys = xs[0].shape();
  if (axis >= ys.size()) throw ShapeError("concat: axis out of range for " + to_string(ys));
  std::vector<std::size_t> lens;
  ys[axis] = 0;
  for (const auto& v : xs) {
    Shape s = v.shape();
    if (s.size() != ys.size()) throw ShapeError("concat: rank mismatch " + to_string(s));
    lens.push_back(static_cast<std::size_t>(s[axis]));
    ys[axis] += s[axis];
    s[axis] = ys[axis];
    if (s != ys) throw ShapeError("concat: incompatible shape " + to_string(v.shape()));
  }
  const auto sp = split_at(ys, axis);
  Tensor<T> y(ys);
  std::size_t at = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto xv = xs[i].value().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(xv.begin() + o * lens[i] * sp.inner, lens[i] * sp.inner,
                  y.data().begin() + (o * sp.n + at) * sp.inner);
    }
    at += lens[i];
  }
  return xs[0].tape().record(std::move(y), xs, [sp, lens](auto& ctx) {
    const auto gy = ctx.out_grad().data();
    std::size_t at = 0;
    for (std::size_t i = 0; i < lens.size(); ++i) {
      if (ctx.needs(i)) {
        auto gx = ctx.in_grad(i).data();
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t j = 0; j < lens[i] * sp.inner; ++j)
            gx[o * lens[i] * sp.inner + j] += gy[(o * sp.n + at) * sp.inner + j];
      }
      at += lens[i];
    }
  });
}

template <typename T>
Var<T> roll(const Var<T>& x, std::size_t axis, std::int64_t shift) {
  const auto sp = split_at(x.shape(), axis);
  const auto n = static_cast<std::int64_t>(sp.n);
  const std::size_t s = n == 0 ? 0 : static_cast<std::size_t>(((shift % n) + n) % n);
  Tensor<T> y(x.shape());
  const auto xv = x.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.n; ++i)
      std::copy_n(xv.begin() + (o * sp.n + i) * sp.inner, sp.inner,
                  y.data().begin() + (o * sp.n + (i + s) % sp.n) * sp.inner);
  return x.tape().record(std::move(y), {x}, [sp, s](auto& ctx) {
    auto gx = ctx.in_grad(0).data();
    const auto gy = ctx.out_grad().data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.n; ++i)
        for (std::size_t j = 0; j < sp.inner; ++j)
          gx[(o * sp.n + i) * sp.inner + j] += gy[(o * sp.n + (i + s) % sp.n) * sp.inner + j];
  });
}

template <typename T>
Var<T> pad_reflect(const Var<T>& x, std::int64_t bottom, std::int64_t right) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw ShapeError("pad_reflect needs at least 2 dims");
  const auto H = xs[xs.size() - 2], W = xs.back();
  if (bottom < 0 || right < 0 || bottom >= H || right >= W) {
    throw ShapeError("pad_reflect: padding (" + std::to_string(bottom) + ", " +
                     std::to_string(right) + ") must be smaller than extent " + to_string(xs));
  }
  const auto Ho = H + bottom, Wo = W + right;
  auto reflect = [](std::int64_t i, std::int64_t n) { return i < n ? i : 2 * (n - 1) - i; };
  auto src = std::make_shared<Index>(static_cast<std::size_t>(Ho * Wo));
  for (std::int64_t i = 0; i < Ho; ++i)
    for (std::int64_t j = 0; j < Wo; ++j)
      (*src)[static_cast<std::size_t>(i * Wo + j)] =
          static_cast<std::size_t>(reflect(i, H) * W + reflect(j, W));
  Shape ys = xs;
  ys[ys.size() - 2] = Ho;
  ys.back() = Wo;
  const std::size_t planes = x.value().size() / static_cast<std::size_t>(H * W);
  const auto in_plane = static_cast<std::size_t>(H * W), out_plane = src->size();
  Tensor<T> y(ys);
  const auto xv = x.value().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < out_plane; ++i) y[p * out_plane + i] = xv[p * in_plane + (*src)[i]];
  return x.tape().record(std::move(y), {x}, [src, planes, in_plane, out_plane](auto& ctx) {
    auto gx = ctx.in_grad(0).data();
    const auto gy = ctx.out_grad().data();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < out_plane; ++i) gx[p * in_plane + (*src)[i]] += gy[p * out_plane + i];
  });
}

template <typename T>
Var<T> crop(const Var<T>& x, std::int64_t h, std::int64_t w) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw ShapeError("crop needs at least 2 dims");
  const auto H = xs[xs.size() - 2], W = xs.back();
  if (h < 0 || w < 0 || h > H || w > W) {
    throw ShapeError("crop: " + std::to_string(h) + "x" + std::to_string(w) +
                     " exceeds " + to_string(xs));
  }
  Shape ys = xs;
  ys[ys.size() - 2] = h;
  ys.back() = w;
  const std::size_t planes = x.value().size() / static_cast<std::size_t>(H * W);
  Tensor<T> y(ys);
  const auto xv = x.value().data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::int64_t i = 0; i < h; ++i)
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(p * H * W + i * W), w,
                  y.data().begin() + static_cast<std::ptrdiff_t>(p * h * w + i * w));
  return x.tape().record(std::move(y), {x}, [planes, H, W, h, w](auto& ctx) {
    auto gx = ctx.in_grad(0).data();
    const auto gy = ctx.out_grad().data();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j)
          gx[p * H * W + i * W + j] += gy[p * h * w + i * w + j];
  });
}

template <typename T>
Var<T> take_rows(const Var<T>& table, const std::vector<std::int64_t>& rows) {
  require_rank(table.shape(), 2, "take_rows");
  const auto M = table.dim(0);
  const auto K = static_cast<std::size_t>(table.dim(1));
  for (auto r : rows) {
    if (r < 0 || r >= M) throw ShapeError("take_rows: row " + std::to_string(r) + " out of range");
  }
  Tensor<T> y(Shape{static_cast<std::int64_t>(rows.size()), table.dim(1)});
  const auto tv = table.value().data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(rows[i]) * static_cast<std::ptrdiff_t>(K), K,
                y.data().begin() + static_cast<std::ptrdiff_t>(i * K));
  auto idx = std::make_shared<std::vector<std::int64_t>>(rows);
  return table.tape().record(std::move(y), {table}, [idx, K](auto& ctx) {
    auto gt = ctx.in_grad(0).data();
    const auto gy = ctx.out_grad().data();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t j = 0; j < K; ++j) gt[static_cast<std::size_t>((*idx)[i]) * K + j] += gy[i * K + j];
  });
}

template <typename T>
Var<T> forward_diff(const Var<T>& x, std::size_t axis) {
  const auto sp = split_at(x.shape(), axis);
  if (sp.n < 2) throw ShapeError("forward_diff: axis too short in " + to_string(x.shape()));
  Shape ys = x.shape();
  ys[axis] -= 1;
  Tensor<T> y(ys);
  const auto xv = x.value().data();
  const std::size_t m = sp.n - 1;
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < sp.inner; ++j)
        y[(o * m + i) * sp.inner + j] =
            xv[(o * sp.n + i + 1) * sp.inner + j] - xv[(o * sp.n + i) * sp.inner + j];
  return x.tape().record(std::move(y), {x}, [sp, m](auto& ctx) {
    auto gx = ctx.in_grad(0).data();
    const auto gy = ctx.out_grad().data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < sp.inner; ++j) {
          const T g = gy[(o * m + i) * sp.inner + j];
          gx[(o * sp.n + i + 1) * sp.inner + j] += g;
          gx[(o * sp.n + i) * sp.inner + j] -= g;
        }
  });
}

// ---------------------------------------------------------------------------
// image operators

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, PadMode pad) {
  require_rank(x.shape(), 4, "depthwise_conv2d input");
  require_rank(kernel.shape(), 3, "depthwise_conv2d kernel");
  require_odd_square(kernel.shape(), 1, "depthwise_conv2d");
  if (kernel.dim(0) != x.dim(1)) {
    throw ShapeError("depthwise_conv2d: kernel " + to_string(kernel.shape()) +
                     " does not match channels of " + to_string(x.shape()));
  }
  Tensor<T> y(x.shape());
  dwconv_forward(x, kernel, pad, y);
  return y;
}

template <typename T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& kernel, PadMode pad,
                        const std::optional<Var<T>>& bias) {
  Tensor<T> y = depthwise_conv2d(x.value(), kernel.value(), pad);
  const auto C = x.dim(1);
  const auto plane = static_cast<std::size_t>(x.dim(2) * x.dim(3));
  if (bias) {
    if (bias->rank() != 1 || bias->dim(0) != C) {
      throw ShapeError("depthwise_conv2d: bias " + to_string(bias->shape()) + " for " +
                       std::to_string(C) + " channels");
    }
    const auto bv = bias->value().data();
    for (std::size_t p = 0; p < y.size() / plane; ++p)
      for (std::size_t i = 0; i < plane; ++i) y[p * plane + i] += bv[p % static_cast<std::size_t>(C)];
  }
  std::vector<Var<T>> inputs{x, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return x.tape().record(std::move(y), inputs, [pad, has_bias, plane, C](auto& ctx) {
    Tensor<T>* gx = ctx.needs(0) ? &ctx.in_grad(0) : nullptr;
    Tensor<T>* gk = ctx.needs(1) ? &ctx.in_grad(1) : nullptr;
    if (gx || gk) dwconv_backward(ctx.in_value(0), ctx.in_value(1), pad, ctx.out_grad(), gx, gk);
    if (has_bias && ctx.needs(2)) {
      auto gb = ctx.in_grad(2).data();
      const auto gy = ctx.out_grad().data();
      for (std::size_t p = 0; p < gy.size() / plane; ++p) {
        T s = 0;
        for (std::size_t i = 0; i < plane; ++i) s += gy[p * plane + i];
        gb[p % static_cast<std::size_t>(C)] += s;
      }
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  require_odd_square(kernel.shape(), 2, "conv2d");
  if (kernel.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels, input is " +
                     to_string(x.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != kernel.dim(0))) {
    throw ShapeError("conv2d: bias " + to_string(bias->shape()) + " for kernel " +
                     to_string(kernel.shape()));
  }
  const auto B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Co = kernel.dim(0), K = kernel.dim(2), P = K / 2;
  Tensor<T> y(Shape{B, Co, H, W});
  const T* xv = x.value().data().data();
  const T* kv = kernel.value().data().data();
  // Valid output range for tap offset t: rows i with 0 <= i + t - P < n.
  auto lo = [P](std::int64_t t) { return std::max<std::int64_t>(0, P - t); };
  auto hi = [P](std::int64_t t, std::int64_t n) { return std::min<std::int64_t>(n, n + P - t); };
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < Co; ++co) {
      T* out = y.data().data() + (b * Co + co) * H * W;
      if (bias) std::fill_n(out, H * W, bias->value()[static_cast<std::size_t>(co)]);
      for (std::int64_t ci = 0; ci < Ci; ++ci) {
        const T* in = xv + (b * Ci + ci) * H * W;
        const T* kc = kv + (co * Ci + ci) * K * K;
        for (std::int64_t ky = 0; ky < K; ++ky) {
          for (std::int64_t kx = 0; kx < K; ++kx) {
            const T w = kc[ky * K + kx];
            const std::int64_t j0 = lo(kx), j1 = hi(kx, W), dx = kx - P;
            for (std::int64_t i = lo(ky); i < hi(ky, H); ++i) {
              const T* src = in + (i + ky - P) * W + dx;
              T* dst = out + i * W;
              for (std::int64_t j = j0; j < j1; ++j) dst[j] += w * src[j];
            }
          }
        }
      }
    }
  }
  std::vector<Var<T>> inputs{x, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return x.tape().record(std::move(y), inputs, [=](auto& ctx) {
    const T* g = ctx.out_grad().data().data();
    const T* xv = ctx.in_value(0).data().data();
    const T* kv = ctx.in_value(1).data().data();
    T* gx = ctx.needs(0) ? ctx.in_grad(0).data().data() : nullptr;
    T* gk = ctx.needs(1) ? ctx.in_grad(1).data().data() : nullptr;
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t co = 0; co < Co; ++co) {
        const T* go = g + (b * Co + co) * H * W;
        for (std::int64_t ci = 0; ci < Ci; ++ci) {
          const T* in = xv + (b * Ci + ci) * H * W;
          T* gin = gx ? gx + (b * Ci + ci) * H * W : nullptr;
          const T* kc = kv + (co * Ci + ci) * K * K;
          T* gkc = gk ? gk + (co * Ci + ci) * K * K : nullptr;
          for (std::int64_t ky = 0; ky < K; ++ky) {
            for (std::int64_t kx = 0; kx < K; ++kx) {
              const T w = kc[ky * K + kx];
              const std::int64_t j0 = lo(kx), j1 = hi(kx, W), dx = kx - P;
              T acc = 0;
              for (std::int64_t i = lo(ky); i < hi(ky, H); ++i) {
                const std::int64_t srow = (i + ky - P) * W + dx;
                const T* grow = go + i * W;
                if (gin) {
                  T* dst = gin + srow;
                  for (std::int64_t j = j0; j < j1; ++j) dst[j] += w * grow[j];
                }
                const T* src = in + srow;
                for (std::int64_t j = j0; j < j1; ++j) acc += grow[j] * src[j];
              }
              if (gkc) gkc[ky * K + kx] += acc;
            }
          }
        }
      }
    }
    if (has_bias && ctx.needs(2)) {
      auto gb = ctx.in_grad(2).data();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t co = 0; co < Co; ++co) {
          T s = 0;
          const T* go = g + (b * Co + co) * H * W;
          for (std::int64_t i = 0; i < H * W; ++i) s += go[i];
          gb[static_cast<std::size_t>(co)] += s;
        }
    }
  });
}

template <typename T>
Var<T> filter2d_valid(const Var<T>& x, const Tensor<T>& kernel) {
  require_rank(x.shape(), 4, "filter2d_valid input");
  require_rank(kernel.shape(), 2, "filter2d_valid kernel");
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto kh = kernel.dim(0), kw = kernel.dim(1);
  if (kh > H || kw > W) {
    throw ConfigError("filter2d_valid: kernel " + to_string(kernel.shape()) +
                      " larger than image " + to_string(x.shape()));
  }
  const auto Ho = H - kh + 1, Wo = W - kw + 1;
  Tensor<T> y(Shape{B, C, Ho, Wo});
  const T* xv = x.value().data().data();
  const T* kv = kernel.data().data();
  for (std::int64_t p = 0; p < B * C; ++p) {
    const T* in = xv + p * H * W;
    T* out = y.data().data() + p * Ho * Wo;
    for (std::int64_t u = 0; u < kh; ++u)
      for (std::int64_t v = 0; v < kw; ++v) {
        const T w = kv[u * kw + v];
        for (std::int64_t i = 0; i < Ho; ++i)
          for (std::int64_t j = 0; j < Wo; ++j) out[i * Wo + j] += w * in[(i + u) * W + j + v];
      }
  }
  auto kept = std::make_shared<const Tensor<T>>(kernel);
  return x.tape().record(std::move(y), {x}, [=](auto& ctx) {
    const T* kv = kept->data().data();
    const T* g = ctx.out_grad().data().data();
    T* gx = ctx.in_grad(0).data().data();
    for (std::int64_t p = 0; p < B * C; ++p) {
      const T* go = g + p * Ho * Wo;
      T* gi = gx + p * H * W;
      for (std::int64_t u = 0; u < kh; ++u)
        for (std::int64_t v = 0; v < kw; ++v) {
          const T w = kv[u * kw + v];
          for (std::int64_t i = 0; i < Ho; ++i)
            for (std::int64_t j = 0; j < Wo; ++j) gi[(i + u) * W + j + v] += w * go[i * Wo + j];
        }
    }
  });
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t s) {
  require_rank(x.shape(), 4, "pixel_shuffle input");
  if (s < 1 || x.dim(1) % (s * s) != 0) {
    throw ShapeError("pixel_shuffle: " + std::to_string(x.dim(1)) +
                     " channels not divisible by s^2 = " + std::to_string(s * s));
  }
  const auto B = x.dim(0), C = x.dim(1) / (s * s), H = x.dim(2), W = x.dim(3);
  Tensor<T> y(Shape{B, C, H * s, W * s});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t di = 0; di < s; ++di)
        for (std::int64_t dj = 0; dj < s; ++dj)
          for (std::int64_t i = 0; i < H; ++i)
            for (std::int64_t j = 0; j < W; ++j)
              y.at({b, c, s * i + di, s * j + dj}) = x.at({b, c * s * s + di * s + dj, i, j});
  return y;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t s) {
  require_rank(x.shape(), 4, "pixel_unshuffle input");
  if (s < 1 || x.dim(2) % s != 0 || x.dim(3) % s != 0) {
    throw ShapeError("pixel_unshuffle: extents of " + to_string(x.shape()) +
                     " not divisible by " + std::to_string(s));
  }
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2) / s, W = x.dim(3) / s;
  Tensor<T> y(Shape{B, C * s * s, H, W});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t di = 0; di < s; ++di)
        for (std::int64_t dj = 0; dj < s; ++dj)
          for (std::int64_t i = 0; i < H; ++i)
            for (std::int64_t j = 0; j < W; ++j)
              y.at({b, c * s * s + di * s + dj, i, j}) = x.at({b, c, s * i + di, s * j + dj});
  return y;
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::int64_t s) {
  return x.tape().record(pixel_shuffle(x.value(), s), {x}, [s](auto& ctx) {
    const Tensor<T> g = pixel_unshuffle(ctx.out_grad(), s);
    auto gx = ctx.in_grad(0).data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// normalization

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const auto sp = split_at(x.shape(), axis);
  Tensor<T> y(x.shape());
  const auto xv = x.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t j = 0; j < sp.inner; ++j) {
      const std::size_t base = o * sp.n * sp.inner + j;
      T mx = xv[base];
      for (std::size_t i = 1; i < sp.n; ++i) mx = std::max(mx, xv[base + i * sp.inner]);
      T s = 0;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const T e = std::exp(xv[base + i * sp.inner] - mx);
        y[base + i * sp.inner] = e;
        s += e;
      }
      for (std::size_t i = 0; i < sp.n; ++i) y[base + i * sp.inner] /= s;
    }
  }
  return x.tape().record(std::move(y), {x}, [sp](auto& ctx) {
    const auto& yv = ctx.out_value();
    const auto& gy = ctx.out_grad();
    auto& gx = ctx.in_grad(0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t j = 0; j < sp.inner; ++j) {
        const std::size_t base = o * sp.n * sp.inner + j;
        T dot = 0;
        for (std::size_t i = 0; i < sp.n; ++i) dot += gy[base + i * sp.inner] * yv[base + i * sp.inner];
        for (std::size_t i = 0; i < sp.n; ++i) {
          const std::size_t k = base + i * sp.inner;
          gx[k] += yv[k] * (gy[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Shape& xs = x.shape();
  if (xs.empty() || gamma.shape() != Shape{xs.back()} || beta.shape() != Shape{xs.back()}) {
    throw ShapeError("layernorm: affine parameters " + to_string(gamma.shape()) + "/" +
                     to_string(beta.shape()) + " for input " + to_string(xs));
  }
  const auto C = static_cast<std::size_t>(xs.back());
  const std::size_t rows = x.value().size() / C;
  Tensor<T> y(xs);
  const auto xv = x.value().data();
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * C;
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += row[c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(C);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] = (row[c] - mu) * rstd * gv[c] + bv[c];
  }
  return x.tape().record(std::move(y), {x, gamma, beta}, [C, rows, eps](auto& ctx) {
    const auto& xv = ctx.in_value(0);
    const auto& gv = ctx.in_value(1);
    const auto& gy = ctx.out_grad();
    T* gx = ctx.needs(0) ? ctx.in_grad(0).data().data() : nullptr;
    T* gg = ctx.needs(1) ? ctx.in_grad(1).data().data() : nullptr;
    T* gb = ctx.needs(2) ? ctx.in_grad(2).data().data() : nullptr;
    std::vector<T> xhat(C), dxhat(C);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = xv.data().data() + r * C;
      const T* g = gy.data().data() + r * C;
      T mu = 0;
      for (std::size_t c = 0; c < C; ++c) mu += row[c];
      mu /= static_cast<T>(C);
      T var = 0;
      for (std::size_t c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
      var /= static_cast<T>(C);
      const T rstd = T(1) / std::sqrt(var + eps);
      T m1 = 0, m2 = 0;
      for (std::size_t c = 0; c < C; ++c) {
        xhat[c] = (row[c] - mu) * rstd;
        dxhat[c] = g[c] * gv[c];
        m1 += dxhat[c];
        m2 += dxhat[c] * xhat[c];
        if (gg) gg[c] += g[c] * xhat[c];
        if (gb) gb[c] += g[c];
      }
      m1 /= static_cast<T>(C);
      m2 /= static_cast<T>(C);
      if (gx) {
        for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += rstd * (dxhat[c] - m1 - xhat[c] * m2);
      }
    }
  });
}

template <typename T>
Var<T> normalize_last(const Var<T>& x, T eps) {
  const auto C = static_cast<std::size_t>(x.shape().back());
  const std::size_t rows = x.value().size() / C;
  Tensor<T> y(x.shape());
  auto norms = std::make_shared<std::vector<T>>(rows);
  const auto xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < C; ++c) s += xv[r * C + c] * xv[r * C + c];
    const T n = std::sqrt(s);
    (*norms)[r] = n;
    const T d = std::max(n, eps);
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] = xv[r * C + c] / d;
  }
  return x.tape().record(std::move(y), {x}, [C, rows, eps, norms](auto& ctx) {
    const auto& yv = ctx.out_value();
    const auto& gy = ctx.out_grad();
    auto& gx = ctx.in_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T n = (*norms)[r];
      if (n > eps) {
        T dot = 0;
        for (std::size_t c = 0; c < C; ++c) dot += gy[r * C + c] * yv[r * C + c];
        for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += (gy[r * C + c] - yv[r * C + c] * dot) / n;
      } else {
        for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += gy[r * C + c] / eps;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// spectral

template <typename T>
std::pair<Tensor<T>, Tensor<T>> dft2(const Tensor<T>& x) {
  check_fft_dims(x.shape());
  const auto h = static_cast<std::size_t>(x.shape()[x.rank() - 2]);
  const auto w = static_cast<std::size_t>(x.shape().back());
  std::vector<std::complex<double>> a(x.data().begin(), x.data().end());
  fft2_planes(a, x.size() / (h * w), h, w, false);
  Tensor<T> re(x.shape()), im(x.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    re[i] = static_cast<T>(a[i].real());
    im[i] = static_cast<T>(a[i].imag());
  }
  return {std::move(re), std::move(im)};
}

template <typename T>
std::pair<Var<T>, Var<T>> dft2(const Var<T>& x) {
  auto [re, im] = dft2(x.value());
  const std::size_t n = re.size();
  Shape stacked_shape{2};
  stacked_shape.insert(stacked_shape.end(), x.shape().begin(), x.shape().end());
  Tensor<T> stacked(stacked_shape);
  std::copy(re.data().begin(), re.data().end(), stacked.data().begin());
  std::copy(im.data().begin(), im.data().end(), stacked.data().begin() + static_cast<std::ptrdiff_t>(n));
  const auto h = static_cast<std::size_t>(x.shape()[x.rank() - 2]);
  const auto w = static_cast<std::size_t>(x.shape().back());
  // d/dx of (Re, Im) of the forward transform is the real part of the
  // unnormalized inverse transform applied to (g_re + i g_im).
  Var<T> s = x.tape().record(std::move(stacked), {x}, [n, h, w](auto& ctx) {
    const auto gy = ctx.out_grad().data();
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = {static_cast<double>(gy[i]), static_cast<double>(gy[n + i])};
    fft2_planes(a, n / (h * w), h, w, true);
    auto gx = ctx.in_grad(0).data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += static_cast<T>(a[i].real());
  });
  return {reshape(narrow(s, 0, 0, 1), x.shape()), reshape(narrow(s, 0, 1, 1), x.shape())};
}

// ---------------------------------------------------------------------------
// stochastic regularizers

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = (keep > 0.0 && rng.uniform() < keep) ? static_cast<T>(1.0 / keep) : T(0);
  return mul(x, x.tape().constant(std::move(mask)));
}

template <typename T>
Var<T> drop_path(const Var<T>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  Shape ms(x.rank(), 1);
  ms[0] = x.dim(0);
  Tensor<T> mask(ms);
  for (auto& m : mask.data()) m = (keep > 0.0 && rng.uniform() < keep) ? static_cast<T>(1.0 / keep) : T(0);
  return mul(x, x.tape().constant(std::move(mask)));
}

// ---------------------------------------------------------------------------
// resampling

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() < 2) throw ShapeError("bicubic_resize needs at least 2 dims");
  if (out_h <= 0 || out_w <= 0) {
    throw ConfigError("bicubic_resize: target extents must be positive, got " +
                      std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const auto H = x.shape()[x.rank() - 2], W = x.shape().back();
  const auto th = resample_table(H, out_h), tw = resample_table(W, out_w);
  const std::size_t planes = x.size() / static_cast<std::size_t>(H * W);
  Shape ys = x.shape();
  ys[ys.size() - 2] = out_h;
  ys.back() = out_w;
  Tensor<T> y(ys);
  std::vector<double> tmp(static_cast<std::size_t>(H * out_w));
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = x.data().data() + p * static_cast<std::size_t>(H * W);
    for (std::int64_t i = 0; i < H; ++i)
      for (std::int64_t o = 0; o < out_w; ++o) {
        double s = 0;
        for (int k = 0; k < 4; ++k) {
          const auto t = static_cast<std::size_t>(o * 4 + k);
          s += tw.w[t] * static_cast<double>(in[i * W + tw.idx[t]]);
        }
        tmp[static_cast<std::size_t>(i * out_w + o)] = s;
      }
    T* out = y.data().data() + p * static_cast<std::size_t>(out_h * out_w);
    for (std::int64_t o = 0; o < out_h; ++o)
      for (std::int64_t j = 0; j < out_w; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k) {
          const auto t = static_cast<std::size_t>(o * 4 + k);
          s += th.w[t] * tmp[static_cast<std::size_t>(th.idx[t] * out_w + j)];
        }
        out[o * out_w + j] = static_cast<T>(s);
      }
  }
  return y;
}

template <typename T>
Tensor<T> bicubic_rescale(const Tensor<T>& x, std::int64_t num, std::int64_t den) {
  if (num <= 0 || den <= 0) throw ConfigError("bicubic_rescale: scale must be positive");
  if (x.rank() < 2) throw ShapeError("bicubic_resize needs at least 2 dims");
  const auto H = x.shape()[x.rank() - 2], W = x.shape().back();
  return bicubic_resize(x, H * num / den, W * num / den);
}

// ---------------------------------------------------------------------------

#define SFGSR_INSTANTIATE(T)                                                                  \
  template Var<T> add(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> div(const Var<T>&, const Var<T>&);                                          \
  template Var<T> add_scalar(const Var<T>&, T);                                               \
  template Var<T> mul_scalar(const Var<T>&, T);                                               \
  template Var<T> gelu(const Var<T>&);                                                        \
  template Var<T> sigmoid(const Var<T>&);                                                     \
  template Var<T> relu(const Var<T>&);                                                        \
  template Var<T> leaky_relu(const Var<T>&, T);                                               \
  template Var<T> abs(const Var<T>&);                                                         \
  template Var<T> sqrt(const Var<T>&);                                                        \
  template Var<T> exp(const Var<T>&);                                                         \
  template Var<T> sin(const Var<T>&);                                                         \
  template Var<T> clamp_max(const Var<T>&, T);                                                \
  template Var<T> sum(const Var<T>&);                                                         \
  template Var<T> mean(const Var<T>&);                                                        \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);         \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                                    \
  template Var<T> reshape(const Var<T>&, Shape);                                              \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                    \
  template Var<T> narrow(const Var<T>&, std::size_t, std::int64_t, std::int64_t);             \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                            \
  template Var<T> roll(const Var<T>&, std::size_t, std::int64_t);                             \
  template Var<T> pad_reflect(const Var<T>&, std::int64_t, std::int64_t);                     \
  template Var<T> crop(const Var<T>&, std::int64_t, std::int64_t);                            \
  template Var<T> take_rows(const Var<T>&, const std::vector<std::int64_t>&);                 \
  template Var<T> forward_diff(const Var<T>&, std::size_t);                                   \
  template Var<T> depthwise_conv2d(const Var<T>&, const Var<T>&, PadMode,                     \
                                   const std::optional<Var<T>>&);                             \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);         \
  template Var<T> filter2d_valid(const Var<T>&, const Tensor<T>&);                            \
  template Var<T> pixel_shuffle(const Var<T>&, std::int64_t);                                 \
  template Var<T> softmax(const Var<T>&, std::size_t);                                        \
  template Var<T> layernorm(const Var<T>&, const Var<T>&, const Var<T>&, T);                  \
  template Var<T> normalize_last(const Var<T>&, T);                                           \
  template std::pair<Var<T>, Var<T>> dft2(const Var<T>&);                                     \
  template Var<T> dropout(const Var<T>&, double, Rng&);                                       \
  template Var<T> drop_path(const Var<T>&, double, Rng&);                                     \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, PadMode);           \
  template Tensor<T> bicubic_resize(const Tensor<T>&, std::int64_t, std::int64_t);            \
  template Tensor<T> bicubic_rescale(const Tensor<T>&, std::int64_t, std::int64_t);           \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, std::int64_t);                           \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::int64_t);                         \
  template std::pair<Tensor<T>, Tensor<T>> dft2(const Tensor<T>&);

SFGSR_INSTANTIATE(float)
SFGSR_INSTANTIATE(double)
#undef SFGSR_INSTANTIATE

}  // namespace sfgsr::num
