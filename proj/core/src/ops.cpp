#include "eciin/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eciin/errors.hpp"

namespace eciin::ops {

using ad::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ConfigError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_same(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const char* what, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ConfigError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                      shape_str(s));
  }
}

// Accumulates into parent k's gradient when that parent participates.
Array* grad_of(Node& self, std::size_t k) {
  Node& p = *self.parents[k];
  if (!p.requires_grad) return nullptr;
  return &p.grad_buffer();
}

template <typename F, typename D>
Var unary(const char* name, const Var& x, F f, D dfdx) {
  const Array& xv = x.value();
  Array out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return ad::make_op(name, std::move(out), {x}, [dfdx](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    const Array& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Column matrix [C*kh*kw, N*Ho*Wo] of the receptive fields.
void im2col(const Array& x, std::size_t kh, std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo,
            std::vector<double>& col) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cols = n * ho * wo;
  col.assign(c * kh * kw * cols, 0.0);
  const double* xd = x.data().data();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        double* row = col.data() + ((ci * kh + ki) * kw + kj) * cols;
        for (std::size_t ni = 0; ni < n; ++ni) {
          const double* plane = xd + (ni * c + ci) * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ki);
            double* dst = row + (ni * ho + oy) * wo;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kj);
              if (ix >= 0 && ix < static_cast<long>(w)) dst[ox] = plane[iy * w + ix];
            }
          }
        }
      }
}

void col2im(const std::vector<double>& col, std::size_t kh, std::size_t kw, int stride, int pad, std::size_t ho,
            std::size_t wo, Array& dx) {
  const std::size_t n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  const std::size_t cols = n * ho * wo;
  double* xd = dx.data().data();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const double* row = col.data() + ((ci * kh + ki) * kw + kj) * cols;
        for (std::size_t ni = 0; ni < n; ++ni) {
          double* plane = xd + (ni * c + ci) * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ki);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const double* src = row + (ni * ho + oy) * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kj);
              if (ix >= 0 && ix < static_cast<long>(w)) plane[iy * w + ix] += src[ox];
            }
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride, int padding) {
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  require_rank("conv2d", "input", xs, 4);
  require_rank("conv2d", "kernel", ks, 4);
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (ks[1] != xs[1]) {
    throw ConfigError("conv2d: kernel expects " + std::to_string(ks[1]) + " input channels, input " +
                      shape_str(xs) + " has " + std::to_string(xs[1]));
  }
  if (bias.shape() != Shape{ks[0]}) {
    throw ConfigError("conv2d: bias shape " + shape_str(bias.shape()) + " must be [" + std::to_string(ks[0]) + "]");
  }
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t k = ks[0], kh = ks[2], kw = ks[3];
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ConfigError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                      " exceeds padded input " + std::to_string(h + 2 * padding) + "x" +
                      std::to_string(w + 2 * padding));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::size_t ckk = c * kh * kw, cols = n * ho * wo;

  std::vector<double> col;
  im2col(input.value(), kh, kw, stride, padding, ho, wo, col);
  RowMat out_km = CMapMat(kernel.value().data().data(), k, ckk) * CMapMat(col.data(), ckk, cols);

  Array out({n, k, ho, wo});
  const double* bd = bias.value().data().data();
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ki = 0; ki < k; ++ki) {
      const double* src = out_km.data() + ki * cols + ni * ho * wo;
      double* dst = out.data().data() + (ni * k + ki) * ho * wo;
      for (std::size_t p = 0; p < ho * wo; ++p) dst[p] = src[p] + bd[ki];
    }

  return ad::make_op("conv2d", std::move(out), {input, kernel, bias},
                     [=](Node& self) {
                       const Array& x = self.parents[0]->value;
                       const Array& kv = self.parents[1]->value;
                       RowMat g(k, cols);
                       for (std::size_t ni = 0; ni < n; ++ni)
                         for (std::size_t ki = 0; ki < k; ++ki) {
                           const double* src = self.grad.data().data() + (ni * k + ki) * ho * wo;
                           std::copy(src, src + ho * wo, g.data() + ki * cols + ni * ho * wo);
                         }
                       if (Array* gb = grad_of(self, 2)) {
                         for (std::size_t ki = 0; ki < k; ++ki) (*gb)[ki] += g.row(ki).sum();
                       }
                       Array* gk = grad_of(self, 1);
                       Array* gx = grad_of(self, 0);
                       if (!gk && !gx) return;
                       std::vector<double> colv;
                       if (gk) {
                         im2col(x, kh, kw, stride, padding, ho, wo, colv);
                         MapMat(gk->data().data(), k, ckk).noalias() += g * CMapMat(colv.data(), ckk, cols).transpose();
                       }
                       if (gx) {
                         std::vector<double> dcol(ckk * cols);
                         MapMat(dcol.data(), ckk, cols).noalias() = CMapMat(kv.data().data(), k, ckk).transpose() * g;
                         col2im(dcol, kh, kw, stride, padding, ho, wo, *gx);
                       }
                     });
}

Var maxpool2d(const Var& input, int k, int stride) {
  const Shape& xs = input.shape();
  require_rank("maxpool2d", "input", xs, 4);
  if (k < 1 || stride < 1) throw ConfigError("maxpool2d: k and stride must be >= 1");
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  if (static_cast<std::size_t>(k) > h || static_cast<std::size_t>(k) > w) {
    throw ConfigError("maxpool2d: window " + std::to_string(k) + " exceeds spatial extent " + std::to_string(h) +
                      "x" + std::to_string(w));
  }
  const std::size_t ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
  Array out({n, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  const double* xd = input.value().data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* p = xd + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = (oy * stride) * w + ox * stride;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const std::size_t idx = (oy * stride + dy) * w + ox * stride + dx;
            if (p[idx] > p[best]) best = idx;  // strict: first maximum wins
          }
        out[o] = p[best];
        argmax[o] = plane * h * w + best;
      }
  }
  return ad::make_op("maxpool2d", std::move(out), {input}, [argmax = std::move(argmax)](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < argmax.size(); ++i) (*gx)[argmax[i]] += self.grad[i];
  });
}

Var global_average_pool(const Var& input) {
  const Shape& xs = input.shape();
  require_rank("global_average_pool", "input", xs, 4);
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  Array out({n, c});
  const double* xd = input.value().data().data();
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += xd[i * hw + p];
    out[i] = s / static_cast<double>(hw);
  }
  return ad::make_op("global_average_pool", std::move(out), {input}, [n, c, hw](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t p = 0; p < hw; ++p) (*gx)[i * hw + p] += self.grad[i] * inv;
  });
}

Var dense(const Var& input, const Var& weight, const Var& bias) {
  require_rank("dense", "input", input.shape(), 2);
  require_rank("dense", "weight", weight.shape(), 2);
  const std::size_t n = input.shape()[0], d = input.shape()[1];
  if (weight.shape()[0] != d) {
    throw ConfigError("dense: input " + shape_str(input.shape()) + " incompatible with weight " +
                      shape_str(weight.shape()));
  }
  const std::size_t m = weight.shape()[1];
  if (bias.shape() != Shape{m}) {
    throw ConfigError("dense: bias " + shape_str(bias.shape()) + " must be [" + std::to_string(m) + "]");
  }
  Array out({n, m});
  MapMat o(out.data().data(), n, m);
  o.noalias() = CMapMat(input.value().data().data(), n, d) * CMapMat(weight.value().data().data(), d, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) o(i, j) += bias.value()[j];
  return ad::make_op("dense", std::move(out), {input, weight, bias}, [n, d, m](Node& self) {
    CMapMat g(self.grad.data().data(), n, m);
    if (Array* gx = grad_of(self, 0)) {
      MapMat(gx->data().data(), n, d).noalias() += g * CMapMat(self.parents[1]->value.data().data(), d, m).transpose();
    }
    if (Array* gw = grad_of(self, 1)) {
      MapMat(gw->data().data(), d, m).noalias() += CMapMat(self.parents[0]->value.data().data(), n, d).transpose() * g;
    }
    if (Array* gb = grad_of(self, 2)) {
      for (std::size_t j = 0; j < m; ++j) (*gb)[j] += g.col(j).sum();
    }
  });
}

Var sigmoid(const Var& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var logistic_open(const Var& x, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("logistic_open: eps must be in (0, 0.5)");
  const double lo = eps, hi = 1.0 - eps;
  return unary(
      "logistic_open", x, [lo, hi](double v) { return std::clamp(stable_sigmoid(v), lo, hi); },
      [lo, hi](double v, double y) {
        const double s = stable_sigmoid(v);
        return (s > lo && s < hi) ? y * (1.0 - y) : 0.0;
      });
}

Var relu(const Var& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(const Var& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(const Var& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp_min(const Var& x, double lo) {
  return unary(
      "clamp_min", x, [lo](double v) { return v > lo ? v : lo; }, [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Var scale(const Var& x, double s) {
  return unary(
      "scale", x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(
      "add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  Array out = a.value();
  out += b.value();
  return ad::make_op("add", std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (Array* g = grad_of(self, k)) *g += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return ad::make_op("sub", std::move(out), {a, b}, [](Node& self) {
    if (Array* g = grad_of(self, 0)) *g += self.grad;
    if (Array* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return ad::make_op("mul", std::move(out), {a, b}, [](Node& self) {
    const Array& av = self.parents[0]->value;
    const Array& bv = self.parents[1]->value;
    if (Array* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (Array* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

Var div(const Var& a, const Var& b) {
  require_same("div", a, b);
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.value()[i] == 0.0) throw NumericError("div: division by zero");
    out[i] /= b.value()[i];
  }
  return ad::make_op("div", std::move(out), {a, b}, [](Node& self) {
    const Array& bv = self.parents[1]->value;
    if (Array* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] / bv[i];
    if (Array* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i] * self.value[i] / bv[i];
  });
}

Var sum_axis(const Var& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  Shape os = x.shape();
  os[axis] = 1;
  Array out(os, 0.0);
  const double* xd = x.value().data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < s.len; ++a) {
      const double* src = xd + (o * s.len + a) * s.inner;
      double* dst = out.data().data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  return ad::make_op("sum_axis", std::move(out), {x}, [s](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t a = 0; a < s.len; ++a) {
        double* dst = g->data().data() + (o * s.len + a) * s.inner;
        const double* src = self.grad.data().data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return ad::make_op("sum_all", Array::scalar(s), {x}, [](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    for (auto& v : g->data()) v += self.grad[0];
  });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Var broadcast_axis(const Var& x, std::size_t axis, std::size_t n) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (s.len != 1) {
    throw ConfigError("broadcast_axis: axis " + std::to_string(axis) + " of " + shape_str(x.shape()) +
                      " is not a singleton");
  }
  if (n == 0) throw ConfigError("broadcast_axis: target extent must be >= 1");
  Shape os = x.shape();
  os[axis] = n;
  Array out(os);
  const double* xd = x.value().data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < n; ++a)
      std::copy(xd + o * s.inner, xd + (o + 1) * s.inner, out.data().data() + (o * n + a) * s.inner);
  return ad::make_op("broadcast_axis", std::move(out), {x}, [s, n](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t a = 0; a < n; ++a) {
        const double* src = self.grad.data().data() + (o * n + a) * s.inner;
        double* dst = g->data().data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
  });
}

Var reshape(const Var& x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  return ad::make_op("reshape", std::move(out), {x}, [](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

namespace {
// For each output flat index, the flat index of the input element it copies.
std::vector<std::size_t> permutation_map(const Shape& in, const std::vector<std::size_t>& perm, Shape& out_shape) {
  const std::size_t r = in.size();
  if (perm.size() != r) throw ConfigError("permute: permutation rank does not match " + shape_str(in));
  std::vector<bool> used(r, false);
  for (auto p : perm) {
    if (p >= r || used[p]) throw ConfigError("permute: invalid permutation");
    used[p] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  out_shape.resize(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
  const std::size_t total = numel(in);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_stride[perm[i]];
    map[o] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}
}  // namespace

Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  Shape os;
  auto map = permutation_map(x.shape(), perm, os);
  Array out(os);
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = x.value()[map[o]];
  return ad::make_op("permute", std::move(out), {x}, [map = std::move(map)](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < map.size(); ++o) (*g)[map[o]] += self.grad[o];
  });
}

Var concat(const std::vector<Var>& inputs, std::size_t axis) {
  if (inputs.empty()) throw ConfigError("concat: needs at least one input");
  const Shape& first = inputs.front().shape();
  if (axis >= first.size()) throw ConfigError("concat: axis out of range for " + shape_str(first));
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& v : inputs) {
    const Shape& s = v.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw ConfigError("concat: " + shape_str(s) + " incompatible with " + shape_str(first) + " along axis " +
                        std::to_string(axis));
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape os = first;
  os[axis] = total;
  const AxisSplit so = split_at(os, axis);
  Array out(os);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const double* src = inputs[k].value().data().data();
    const std::size_t chunk = extents[k] * so.inner;
    for (std::size_t o = 0; o < so.outer; ++o)
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.data().data() + (o * total + offset) * so.inner);
    offset += extents[k];
  }
  return ad::make_op("concat", std::move(out), inputs, [extents, so, total](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      if (Array* g = grad_of(self, k)) {
        const std::size_t chunk = extents[k] * so.inner;
        for (std::size_t o = 0; o < so.outer; ++o) {
          const double* src = self.grad.data().data() + (o * total + offset) * so.inner;
          double* dst = g->data().data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += extents[k];
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (begin >= end || end > s.len) {
    throw ConfigError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                      shape_str(x.shape()));
  }
  Shape os = x.shape();
  const std::size_t len = end - begin;
  os[axis] = len;
  Array out(os);
  const double* xd = x.value().data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy(xd + (o * s.len + begin) * s.inner, xd + (o * s.len + end) * s.inner,
              out.data().data() + o * len * s.inner);
  return ad::make_op("slice", std::move(out), {x}, [s, begin, len](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = self.grad.data().data() + o * len * s.inner;
      double* dst = g->data().data() + (o * s.len + begin) * s.inner;
      for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Var softmax_axis(const Var& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  Array out(x.shape());
  const double* xd = x.value().data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < s.len; ++a) mx = std::max(mx, xd[base + a * s.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < s.len; ++a) z += std::exp(xd[base + a * s.inner] - mx);
      for (std::size_t a = 0; a < s.len; ++a) out[base + a * s.inner] = std::exp(xd[base + a * s.inner] - mx) / z;
    }
  return ad::make_op("softmax_axis", std::move(out), {x}, [s](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    const Array& y = self.value;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (std::size_t a = 0; a < s.len; ++a) dot += self.grad[base + a * s.inner] * y[base + a * s.inner];
        for (std::size_t a = 0; a < s.len; ++a) {
          const std::size_t k = base + a * s.inner;
          (*g)[k] += y[k] * (self.grad[k] - dot);
        }
      }
  });
}

Var log_softmax_axis(const Var& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  Array out(x.shape());
  const double* xd = x.value().data().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < s.len; ++a) mx = std::max(mx, xd[base + a * s.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < s.len; ++a) z += std::exp(xd[base + a * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t a = 0; a < s.len; ++a) out[base + a * s.inner] = xd[base + a * s.inner] - lse;
    }
  return ad::make_op("log_softmax_axis", std::move(out), {x}, [s](Node& self) {
    Array* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double total = 0.0;
        for (std::size_t a = 0; a < s.len; ++a) total += self.grad[base + a * s.inner];
        for (std::size_t a = 0; a < s.len; ++a) {
          const std::size_t k = base + a * s.inner;
          (*g)[k] += self.grad[k] - std::exp(self.value[k]) * total;
        }
      }
  });
}

Array conv2d(const Array& input, const Array& kernel, const Array& bias, int stride, int padding) {
  return conv2d(Var::constant(input), Var::constant(kernel), Var::constant(bias), stride, padding).value();
}
Array maxpool2d(const Array& input, int k, int stride) { return maxpool2d(Var::constant(input), k, stride).value(); }
Array global_average_pool(const Array& input) { return global_average_pool(Var::constant(input)).value(); }
Array dense(const Array& input, const Array& weight, const Array& bias) {
  return dense(Var::constant(input), Var::constant(weight), Var::constant(bias)).value();
}
Array sigmoid(const Array& x) { return sigmoid(Var::constant(x)).value(); }
Array relu(const Array& x) { return relu(Var::constant(x)).value(); }
Array concat(const std::vector<Array>& inputs, std::size_t axis) {
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& a : inputs) vars.push_back(Var::constant(a));
  return concat(vars, axis).value();
}

}  // namespace eciin::ops
