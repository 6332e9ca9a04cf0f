#include "tsfm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "parallel.hpp"
#include "tsfm/errors.hpp"

namespace tsfm {

namespace {

using detail::make_result;
using detail::Node;

double* grad_of(Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

const double* data_of(const Node& self, std::size_t i) { return self.inputs[i]->data.data(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": rank-0 tensor");
  return x.shape().back();
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  detail::parallel_for(m, m * k * n, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* c = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        const double* br = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * br[j];
      }
    }
  });
  return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    const double* A = data_of(self, 0);
    const double* B = data_of(self, 1);
    const double* G = self.grad.data();
    if (double* dA = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
          dA[i * k + p] += s;
        }
    }
    if (double* dB = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw DimensionError("linear: weight must be [out, in], got " + shape_str(weight.shape()));
  const std::size_t in = weight.dim(1), outd = weight.dim(0);
  if (last_dim(x, "linear") != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{outd}) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " expected (" + std::to_string(outd) + ",)");
  }
  const std::size_t rows = x.numel() / in;
  std::vector<double> out(rows * outd);
  const double* X = x.data().data();
  const double* W = weight.data().data();
  const double* Bv = has_bias ? bias.data().data() : nullptr;
  // [in, out] copy so the inner loop runs contiguously over outputs.
  std::vector<double> wt(in * outd);
  for (std::size_t o = 0; o < outd; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * outd + o] = W[o * in + i];
  detail::parallel_for(rows, rows * in * outd, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const double* xr = X + r * in;
      double* y = out.data() + r * outd;
      if (Bv) std::copy_n(Bv, outd, y);
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = xr[i];
        const double* wi = wt.data() + i * outd;
        for (std::size_t o = 0; o < outd; ++o) y[o] += xi * wi[o];
      }
    }
  });
  Shape shape = x.shape();
  shape.back() = outd;
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(shape), std::move(out), std::move(inputs), "linear",
                     [rows, in, outd, has_bias](Node& self) {
                       const double* X = data_of(self, 0);
                       const double* W = data_of(self, 1);
                       const double* G = self.grad.data();
                       if (double* dX = grad_of(self, 0)) {
                         detail::parallel_for(rows, rows * in * outd, [&](std::size_t r0, std::size_t r1) {
                           for (std::size_t r = r0; r < r1; ++r) {
                             double* dx = dX + r * in;
                             for (std::size_t o = 0; o < outd; ++o) {
                               const double g = G[r * outd + o];
                               if (g == 0.0) continue;
                               const double* wr = W + o * in;
                               for (std::size_t i = 0; i < in; ++i) dx[i] += g * wr[i];
                             }
                           }
                         });
                       }
                       if (double* dW = grad_of(self, 1)) {
                         detail::parallel_for(outd, rows * in * outd, [&](std::size_t o0, std::size_t o1) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* xr = X + r * in;
                             for (std::size_t o = o0; o < o1; ++o) {
                               const double g = G[r * outd + o];
                               if (g == 0.0) continue;
                               double* dw = dW + o * in;
                               for (std::size_t i = 0; i < in; ++i) dw[i] += g * xr[i];
                             }
                           }
                         });
                       }
                       if (has_bias) {
                         if (double* dB = grad_of(self, 2)) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t o = 0; o < outd; ++o) dB[o] += G[r * outd + o];
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    const std::size_t n = self.grad.size();
    for (std::size_t k = 0; k < 2; ++k)
      if (double* d = grad_of(self, k))
        for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return make_result(a.shape(), std::move(out), {a, b}, "sub", [](Node& self) {
    const std::size_t n = self.grad.size();
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[i];
    if (double* d = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) d[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    const std::size_t n = self.grad.size();
    const double* A = data_of(self, 0);
    const double* B = data_of(self, 1);
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[i] * B[i];
    if (double* d = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[i] * A[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * factor;
  return make_result(x.shape(), std::move(out), {x}, "scale", [factor](Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t d = last_dim(x, "add_bias");
  if (bias.shape() != Shape{d}) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " + shape_str(x.shape()));
  }
  return add_tiled(x, bias);
}

Tensor add_tiled(const Tensor& x, const Tensor& pattern) {
  const std::size_t n = x.numel(), m = pattern.numel();
  if (m == 0 || n % m != 0) {
    throw DimensionError("add_tiled: pattern " + shape_str(pattern.shape()) + " does not tile " + shape_str(x.shape()));
  }
  std::vector<double> out(n);
  const double* X = x.data().data();
  const double* P = pattern.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = X[i] + P[i % m];
  return make_result(x.shape(), std::move(out), {x, pattern}, "add_tiled", [n, m](Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[i];
    if (double* d = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) d[i % m] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, "sum", [](Node& self) {
    if (double* d = grad_of(self, 0)) {
      const double g = self.grad[0];
      const std::size_t n = self.inputs[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) d[i] += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last: rank < 2 " + shape_str(x.shape()));
  Shape shape = x.shape();
  const std::size_t a = shape[shape.size() - 2], b = shape.back();
  const std::size_t outer = x.numel() / (a * b);
  std::swap(shape[shape.size() - 2], shape.back());
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j) out[o * a * b + j * a + i] = X[o * a * b + i * b + j];
  return make_result(std::move(shape), std::move(out), {x}, "transpose_last", [outer, a, b](Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < a; ++i)
          for (std::size_t j = 0; j < b; ++j) d[o * a * b + i * b + j] += self.grad[o * a * b + j * a + i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis " + std::to_string(axis) + " out of range");
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref) + " on axis " + std::to_string(axis));
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  const std::size_t row = total * inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* P = parts[k].data().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(P + o * widths[k], widths[k], out.data() + o * row + offset);
    offset += widths[k];
  }
  Shape shape = ref;
  shape[axis] = total;
  return make_result(std::move(shape), std::move(out), parts, "concat", [outer, row, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* d = grad_of(self, k))
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i) d[o * widths[k] + i] += self.grad[o * row + offset + i];
      offset += widths[k];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw DimensionError("gather_rows: rank-0 tensor");
  const std::size_t n = x.dim(0);
  const std::size_t width = x.numel() / std::max<std::size_t>(n, 1);
  std::vector<double> out(rows.size() * width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows: index " + std::to_string(rows[r]) + " out of range for " + shape_str(x.shape()));
    std::copy_n(x.data().data() + rows[r] * width, width, out.data() + r * width);
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result(std::move(shape), std::move(out), {x}, "gather_rows", [idx = std::move(idx), width](Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t i = 0; i < width; ++i) d[idx[r] * width + i] += self.grad[r * width + i];
  });
}

Tensor replace_rows(const Tensor& x, std::span<const std::uint8_t> mask, const Tensor& token) {
  if (x.rank() != 2 || mask.size() != x.dim(0) || token.numel() != x.dim(1)) {
    throw DimensionError("replace_rows: x " + shape_str(x.shape()) + ", mask length " + std::to_string(mask.size()) +
                         ", token " + shape_str(token.shape()));
  }
  const std::size_t rows = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r)
    if (mask[r]) std::copy_n(token.data().data(), d, out.data() + r * d);
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return make_result(x.shape(), std::move(out), {x, token}, "replace_rows", [m = std::move(m), rows, d](Node& self) {
    double* dx = grad_of(self, 0);
    double* dt = grad_of(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * d;
      if (m[r]) {
        if (dt)
          for (std::size_t i = 0; i < d; ++i) dt[i] += g[i];
      } else if (dx) {
        for (std::size_t i = 0; i < d; ++i) dx[r * d + i] += g[i];
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * X[i] * (1.0 + std::erf(X[i] * std::numbers::sqrt2 / 2.0));
  return make_result(x.shape(), std::move(out), {x}, "gelu", [](Node& self) {
    if (double* d = grad_of(self, 0)) {
      const double* X = data_of(self, 0);
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double v = X[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        d[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

Tensor elu(const Tensor& x, double alpha) {
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : alpha * std::expm1(X[i]);
  return make_result(x.shape(), std::move(out), {x}, "elu", [alpha](Node& self) {
    if (double* d = grad_of(self, 0)) {
      const double* X = data_of(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        d[i] += self.grad[i] * (X[i] > 0.0 ? 1.0 : alpha * std::exp(X[i]));
    }
  });
}

Tensor dropout(const Tensor& x, double p, RunContext& ctx) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (!ctx.training || p == 0.0) return x;
  const std::uint64_t op = ctx.op_index++;
  const std::uint64_t base = splitmix64(splitmix64(splitmix64(ctx.seed) ^ op) ^ ctx.step);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = static_cast<double>(splitmix64(base + i) >> 11) * 0x1.0p-53;
    mask[i] = u >= p ? keep_scale : 0.0;
    out[i] = X[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), {x}, "dropout", [mask = std::move(mask)](Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < mask.size(); ++i) d[i] += self.grad[i] * mask[i];
  });
}

Tensor mean_pool(const Tensor& x, std::size_t axis, std::size_t window) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("mean_pool: axis out of range for " + shape_str(s));
  if (window == 0 || s[axis] % window != 0) {
    throw DimensionError("mean_pool: window " + std::to_string(window) + " does not divide axis of length " + std::to_string(s[axis]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis], pooled = len / window;
  const double inv = 1.0 / static_cast<double>(window);
  std::vector<double> out(outer * pooled * inner, 0.0);
  const double* X = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[(o * pooled + l / window) * inner + i] += X[(o * len + l) * inner + i] * inv;
  Shape shape = s;
  shape[axis] = pooled;
  return make_result(std::move(shape), std::move(out), {x}, "mean_pool", [outer, len, pooled, inner, window, inv](Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t i = 0; i < inner; ++i) d[(o * len + l) * inner + i] += self.grad[(o * pooled + l / window) * inner + i] * inv;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t d = last_dim(x, "layer_norm");
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const double* X = x.data().data();
  const double* Gm = gamma.data().data();
  const double* Bt = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (xr[i] - mu) * is;
      out[r * d + i] = xhat[r * d + i] * Gm[i] + Bt[i];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
                     [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const double* Gm = data_of(self, 1);
                       const double* G = self.grad.data();
                       double* dX = grad_of(self, 0);
                       double* dG = grad_of(self, 1);
                       double* dB = grad_of(self, 2);
                       const double dd = static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* g = G + r * d;
                         const double* xh = xhat.data() + r * d;
                         if (dG)
                           for (std::size_t i = 0; i < d; ++i) dG[i] += g[i] * xh[i];
                         if (dB)
                           for (std::size_t i = 0; i < d; ++i) dB[i] += g[i];
                         if (dX) {
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t i = 0; i < d; ++i) {
                             const double gy = g[i] * Gm[i];
                             s1 += gy;
                             s2 += gy * xh[i];
                           }
                           for (std::size_t i = 0; i < d; ++i) {
                             const double gy = g[i] * Gm[i];
                             dX[r * d + i] += inv_std[r] / dd * (dd * gy - s1 - xh[i] * s2);
                           }
                         }
                       }
                     });
}

namespace {

// Output positions l whose window puts tap j inside the unpadded input:
// 0 <= l·stride + j − pad_left < len.
std::pair<std::size_t, std::size_t> conv_tap_range(std::size_t j, std::size_t len, std::size_t lout, std::size_t stride,
                                                   std::size_t pad_left) {
  const std::size_t l0 = j >= pad_left ? 0 : (pad_left - j + stride - 1) / stride;
  if (j >= len + pad_left) return {l0, l0};
  const std::size_t l1 = std::min(lout, (len - 1 + pad_left - j) / stride + 1);
  return {l0, std::max(l0, l1)};
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride, std::size_t pad_left,
              std::size_t pad_right) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) throw DimensionError("conv1d: input must be [N, c_in, len] or [c_in, len], got " + shape_str(x.shape()));
  if (kernels.rank() != 3) throw DimensionError("conv1d: kernels must be [c_out, c_in, k], got " + shape_str(kernels.shape()));
  if (stride == 0) throw ConfigError("conv1d: stride must be positive");
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0), len = x.dim(batched ? 2 : 1);
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv1d: kernels " + shape_str(kernels.shape()) + " expect " + std::to_string(kernels.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
  }
  if (len + pad_left + pad_right < k) {
    throw DimensionError("conv1d: kernel length " + std::to_string(k) + " exceeds padded input length " +
                         std::to_string(len + pad_left + pad_right));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{cout}) throw DimensionError("conv1d: bias " + shape_str(bias.shape()));
  const std::size_t lout = (len + pad_left + pad_right - k) / stride + 1;
  std::vector<double> out(n * cout * lout);
  const double* X = x.data().data();
  const double* W = kernels.data().data();
  const double* Bv = has_bias ? bias.data().data() : nullptr;
  detail::parallel_for(n, n * cout * cin * lout * k, [&](std::size_t n0, std::size_t n1) {
    for (std::size_t b = n0; b < n1; ++b)
      for (std::size_t co = 0; co < cout; ++co) {
        double* y = out.data() + (b * cout + co) * lout;
        std::fill_n(y, lout, Bv ? Bv[co] : 0.0);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xr = X + (b * cin + ci) * len;
          const double* w = W + (co * cin + ci) * k;
          for (std::size_t j = 0; j < k; ++j) {
            const auto [l0, l1] = conv_tap_range(j, len, lout, stride, pad_left);
            const double wj = w[j];
            const double* xs = xr + (l0 * stride + j - pad_left);
            for (std::size_t l = l0; l < l1; ++l, xs += stride) y[l] += wj * *xs;
          }
        }
      }
  });
  Shape shape = batched ? Shape{n, cout, lout} : Shape{cout, lout};
  std::vector<Tensor> inputs{x, kernels};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(shape), std::move(out), std::move(inputs), "conv1d",
                     [n, cin, len, cout, k, lout, stride, pad_left, has_bias](Node& self) {
                       const double* X = data_of(self, 0);
                       const double* W = data_of(self, 1);
                       const double* G = self.grad.data();
                       double* dX = grad_of(self, 0);
                       double* dW = grad_of(self, 1);
                       double* dB = has_bias ? grad_of(self, 2) : nullptr;
                       for (std::size_t b = 0; b < n; ++b)
                         for (std::size_t co = 0; co < cout; ++co) {
                           const double* g = G + (b * cout + co) * lout;
                           if (dB)
                             for (std::size_t l = 0; l < lout; ++l) dB[co] += g[l];
                           for (std::size_t ci = 0; ci < cin; ++ci) {
                             const double* xr = X + (b * cin + ci) * len;
                             const double* w = W + (co * cin + ci) * k;
                             double* dx = dX ? dX + (b * cin + ci) * len : nullptr;
                             double* dw = dW ? dW + (co * cin + ci) * k : nullptr;
                             for (std::size_t j = 0; j < k; ++j) {
                               const auto [l0, l1] = conv_tap_range(j, len, lout, stride, pad_left);
                               const std::size_t off = l0 * stride + j - pad_left;
                               if (dw) {
                                 double s = 0.0;
                                 const double* xs = xr + off;
                                 for (std::size_t l = l0; l < l1; ++l, xs += stride) s += g[l] * *xs;
                                 dw[j] += s;
                               }
                               if (dx) {
                                 const double wj = w[j];
                                 double* ds = dx + off;
                                 for (std::size_t l = l0; l < l1; ++l, ds += stride) *ds += g[l] * wj;
                               }
                             }
                           }
                         }
                     });
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride, std::size_t padding) {
  return conv1d(x, kernels, Tensor{}, stride, padding, padding);
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t seq_len,
                           std::size_t n_heads) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention: q/k/v must share a [rows, d] shape, got " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t rows = q.dim(0), d = q.dim(1);
  if (seq_len == 0 || rows % seq_len != 0) throw DimensionError("attention: sequence length " + std::to_string(seq_len) + " does not divide " + std::to_string(rows) + " rows");
  if (n_heads == 0 || d % n_heads != 0) throw DimensionError("attention: " + std::to_string(n_heads) + " heads do not divide width " + std::to_string(d));
  const std::size_t groups = rows / seq_len, dh = d / n_heads, S = seq_len;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> probs(groups * n_heads * S * S);
  std::vector<double> out(rows * d, 0.0);
  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();
  detail::parallel_for(groups, groups * n_heads * S * S * dh * 2, [&](std::size_t g0, std::size_t g1) {
    for (std::size_t g = g0; g < g1; ++g)
      for (std::size_t h = 0; h < n_heads; ++h) {
        double* P = probs.data() + (g * n_heads + h) * S * S;
        for (std::size_t i = 0; i < S; ++i) {
          const double* qi = Q + (g * S + i) * d + h * dh;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < S; ++j) {
            const double* kj = K + (g * S + j) * d + h * dh;
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
            P[i * S + j] = s * sc;
            mx = std::max(mx, P[i * S + j]);
          }
          double z = 0.0;
          for (std::size_t j = 0; j < S; ++j) {
            P[i * S + j] = std::exp(P[i * S + j] - mx);
            z += P[i * S + j];
          }
          double* oi = out.data() + (g * S + i) * d + h * dh;
          for (std::size_t j = 0; j < S; ++j) {
            P[i * S + j] /= z;
            const double* vj = V + (g * S + j) * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) oi[c] += P[i * S + j] * vj[c];
          }
        }
      }
  });
  return make_result(q.shape(), std::move(out), {q, k, v}, "attention",
                     [groups, n_heads, S, d, dh, sc, probs = std::move(probs)](Node& self) {
                       const double* Q = data_of(self, 0);
                       const double* K = data_of(self, 1);
                       const double* V = data_of(self, 2);
                       double* dQ = grad_of(self, 0);
                       double* dK = grad_of(self, 1);
                       double* dV = grad_of(self, 2);
                       const double* G = self.grad.data();
                       detail::parallel_for(groups, groups * n_heads * S * S * dh * 4, [&](std::size_t g0, std::size_t g1) {
                         std::vector<double> dP(S * S);
                         for (std::size_t g = g0; g < g1; ++g)
                           for (std::size_t h = 0; h < n_heads; ++h) {
                             const double* P = probs.data() + (g * n_heads + h) * S * S;
                             for (std::size_t i = 0; i < S; ++i) {
                               const double* gi = G + (g * S + i) * d + h * dh;
                               double rowdot = 0.0;
                               for (std::size_t j = 0; j < S; ++j) {
                                 const double* vj = V + (g * S + j) * d + h * dh;
                                 double s = 0.0;
                                 for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
                                 dP[i * S + j] = s;
                                 rowdot += s * P[i * S + j];
                                 if (dV) {
                                   double* dvj = dV + (g * S + j) * d + h * dh;
                                   for (std::size_t c = 0; c < dh; ++c) dvj[c] += P[i * S + j] * gi[c];
                                 }
                               }
                               for (std::size_t j = 0; j < S; ++j) dP[i * S + j] = P[i * S + j] * (dP[i * S + j] - rowdot) * sc;
                             }
                             for (std::size_t i = 0; i < S; ++i)
                               for (std::size_t j = 0; j < S; ++j) {
                                 const double ds = dP[i * S + j];
                                 if (ds == 0.0) continue;
                                 if (dQ) {
                                   double* dqi = dQ + (g * S + i) * d + h * dh;
                                   const double* kj = K + (g * S + j) * d + h * dh;
                                   for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
                                 }
                                 if (dK) {
                                   double* dkj = dK + (g * S + j) * d + h * dh;
                                   const double* qi = Q + (g * S + i) * d + h * dh;
                                   for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
                                 }
                               }
                           }
                       });
                     });
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2) throw DimensionError("softmax_attention: expected [n, d_h], got " + shape_str(q.shape()));
  return multihead_attention(q, k, v, q.dim(0), 1);
}

Tensor attention_weights(const Tensor& q, const Tensor& k) {
  if (q.rank() != 2 || q.shape() != k.shape()) {
    throw DimensionError("attention_weights: shapes " + shape_str(q.shape()) + " and " + shape_str(k.shape()));
  }
  const std::size_t n = q.dim(0), d = q.dim(1);
  const double sc = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q[i * d + c] * k[j * d + c];
      p[i * n + j] = s * sc;
      mx = std::max(mx, p[i * n + j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (p[i * n + j] = std::exp(p[i * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= z;
  }
  return Tensor({n, n}, std::move(p));
}

Tensor fft_magnitude(const Tensor& x) {
  const std::size_t t = last_dim(x, "fft_magnitude");
  const std::size_t rows = x.numel() / std::max<std::size_t>(t, 1);
  std::vector<double> cos_t(t * t), sin_t(t * t);
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t n = 0; n < t; ++n) {
      // (f·n) mod t keeps the angle argument small and exact.
      const double ang = 2.0 * std::numbers::pi * static_cast<double>((f * n) % t) / static_cast<double>(t);
      cos_t[f * t + n] = std::cos(ang);
      sin_t[f * t + n] = std::sin(ang);
    }
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * t;
    for (std::size_t f = 0; f <= t / 2; ++f) {
      double re = 0.0, im = 0.0;
      for (std::size_t n = 0; n < t; ++n) {
        re += xr[n] * cos_t[f * t + n];
        im -= xr[n] * sin_t[f * t + n];
      }
      const double mag = std::hypot(re, im);
      out[r * t + f] = mag;
      if (f != 0) out[r * t + (t - f) % t] = mag;
    }
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  if (x.rank() != 2) throw DimensionError("l2_normalize_rows: expected [n, d], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n * d), norms(n);
  const double* X = x.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += X[r * d + i] * X[r * d + i];
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = X[r * d + i] / norms[r];
  }
  std::vector<double> y = out;
  return make_result({n, d}, std::move(out), {x}, "l2_normalize_rows", [n, d, eps, norms = std::move(norms), y = std::move(y)](Node& self) {
    if (double* dX = grad_of(self, 0)) {
      for (std::size_t r = 0; r < n; ++r) {
        const double* g = self.grad.data() + r * d;
        const double* yr = y.data() + r * d;
        if (norms[r] <= eps) {
          for (std::size_t i = 0; i < d; ++i) dX[r * d + i] += g[i] / eps;
          continue;
        }
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += yr[i] * g[i];
        for (std::size_t i = 0; i < d; ++i) dX[r * d + i] += (g[i] - yr[i] * dot) / norms[r];
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.dim(0), kk = logits.dim(1);
  if (b == 0) throw DimensionError("cross_entropy: empty batch");
  std::vector<double> probs(b * kk);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] >= kk) throw DataError("cross_entropy: label " + std::to_string(labels[r]) + " out of range for " + std::to_string(kk) + " classes");
    const double* z = logits.data().data() + r * kk;
    const double mx = *std::max_element(z, z + kk);
    double s = 0.0;
    for (std::size_t c = 0; c < kk; ++c) s += std::exp(z[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < kk; ++c) probs[r * kk + c] = std::exp(z[c] - lse);
    loss += lse - z[labels[r]];
  }
  loss /= static_cast<double>(b);
  std::vector<std::uint32_t> y(labels.begin(), labels.end());
  return make_result({1}, {loss}, {logits}, "cross_entropy", [b, kk, probs = std::move(probs), y = std::move(y)](Node& self) {
    if (double* d = grad_of(self, 0)) {
      const double g = self.grad[0] / static_cast<double>(b);
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < kk; ++c) d[r * kk + c] += g * (probs[r * kk + c] - (c == y[r] ? 1.0 : 0.0));
    }
  });
}

Tensor grid_depthwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t batch,
                           std::size_t channels, std::size_t patches, std::size_t axis) {
  if (x.rank() != 2 || x.dim(0) != batch * channels * patches) {
    throw DimensionError("grid_depthwise_conv: input " + shape_str(x.shape()) + " is not a " + std::to_string(batch) + "×" +
                         std::to_string(channels) + "×" + std::to_string(patches) + " grid of rows");
  }
  const std::size_t d = x.dim(1);
  if (weight.rank() != 2 || weight.dim(0) != d || weight.dim(1) % 2 == 0) {
    throw DimensionError("grid_depthwise_conv: weight must be [d, odd k], got " + shape_str(weight.shape()));
  }
  if (bias.shape() != Shape{d}) throw DimensionError("grid_depthwise_conv: bias " + shape_str(bias.shape()));
  if (axis > 1) throw ConfigError("grid_depthwise_conv: axis must be 0 (channels) or 1 (patches)");
  const std::size_t k = weight.dim(1);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t extent = axis == 0 ? channels : patches;
  // Row index of grid cell (b, c, p) and the stride between neighbours along `axis`.
  const std::size_t step = axis == 0 ? patches : 1;
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  const double* W = weight.data().data();
  const double* Bv = bias.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < patches; ++p) {
        const std::size_t row = (b * channels + c) * patches + p;
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(axis == 0 ? c : p);
        double* y = out.data() + row * d;
        std::copy_n(Bv, d, y);
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = pos + static_cast<std::ptrdiff_t>(j) - half;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(extent)) continue;
          const std::size_t srow = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(row) + (src - pos) * static_cast<std::ptrdiff_t>(step));
          const double* xs = X + srow * d;
          for (std::size_t i = 0; i < d; ++i) y[i] += W[i * k + j] * xs[i];
        }
      }
  return make_result(x.shape(), std::move(out), {x, weight, bias}, "grid_depthwise_conv",
                     [batch, channels, patches, axis, d, k, half, extent, step](Node& self) {
                       const double* X = data_of(self, 0);
                       const double* W = data_of(self, 1);
                       double* dX = grad_of(self, 0);
                       double* dW = grad_of(self, 1);
                       double* dB = grad_of(self, 2);
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t c = 0; c < channels; ++c)
                           for (std::size_t p = 0; p < patches; ++p) {
                             const std::size_t row = (b * channels + c) * patches + p;
                             const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(axis == 0 ? c : p);
                             const double* g = self.grad.data() + row * d;
                             if (dB)
                               for (std::size_t i = 0; i < d; ++i) dB[i] += g[i];
                             for (std::size_t j = 0; j < k; ++j) {
                               const std::ptrdiff_t src = pos + static_cast<std::ptrdiff_t>(j) - half;
                               if (src < 0 || src >= static_cast<std::ptrdiff_t>(extent)) continue;
                               const std::size_t srow = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(row) + (src - pos) * static_cast<std::ptrdiff_t>(step));
                               for (std::size_t i = 0; i < d; ++i) {
                                 if (dW) dW[i * k + j] += g[i] * X[srow * d + i];
                                 if (dX) dX[srow * d + i] += g[i] * W[i * k + j];
                               }
                             }
                           }
                     });
}

}  // namespace tsfm
