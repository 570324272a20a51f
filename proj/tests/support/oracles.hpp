#pragma once

// Deliberately naive reference implementations. Nothing here shares code
// with the library beyond the Array container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "eciin/array.hpp"

namespace oracle {

using eciin::Array;

inline Array conv2d(const Array& x, const Array& w, const Array& b, int stride, int pad) {
  const long n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const long o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const long ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
  Array out({static_cast<std::size_t>(n), static_cast<std::size_t>(o), static_cast<std::size_t>(ho),
             static_cast<std::size_t>(wo)});
  for (long in = 0; in < n; ++in)
    for (long oc = 0; oc < o; ++oc)
      for (long oy = 0; oy < ho; ++oy)
        for (long ox = 0; ox < wo; ++ox) {
          double s = b[oc];
          for (long ic = 0; ic < c; ++ic)
            for (long ky = 0; ky < kh; ++ky)
              for (long kx = 0; kx < kw; ++kx) {
                const long iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += x[((in * c + ic) * h + iy) * wd + ix] * w[((oc * c + ic) * kh + ky) * kw + kx];
              }
          out[((in * o + oc) * ho + oy) * wo + ox] = s;
        }
  return out;
}

inline Array maxpool2d(const Array& x, int k, int stride) {
  const long n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const long ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
  Array out({x.dim(0), x.dim(1), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  for (long i = 0; i < n * c; ++i)
    for (long oy = 0; oy < ho; ++oy)
      for (long ox = 0; ox < wo; ++ox) {
        double m = -std::numeric_limits<double>::infinity();
        for (long dy = 0; dy < k; ++dy)
          for (long dx = 0; dx < k; ++dx) m = std::max(m, x[(i * h + oy * stride + dy) * w + ox * stride + dx]);
        out[(i * ho + oy) * wo + ox] = m;
      }
  return out;
}

inline Array dense(const Array& x, const Array& w, const Array& b) {
  const std::size_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
  Array out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * w[k * m + j];
      out[i * m + j] = s;
    }
  return out;
}

struct RoutingOut {
  std::vector<std::vector<double>> pose;  // [J][16]
  std::vector<double> activation;         // [J]
  std::vector<std::vector<std::vector<double>>> r_history;  // r before the first M-step, then after each E-step
};

// Single-sample EM routing written straight from the update equations.
inline RoutingOut em_routing(const std::vector<std::vector<std::vector<double>>>& votes,  // [I][J][16]
                             const std::vector<double>& a_in, const std::vector<double>& beta_a,
                             const std::vector<double>& beta_u, int iterations, double lambda0, double growth,
                             double floor, double eps = 1e-12) {
  const std::size_t ni = votes.size(), nj = votes[0].size();
  const double pi = 3.14159265358979323846;
  std::vector<std::vector<double>> r(ni, std::vector<double>(nj, 1.0 / static_cast<double>(nj)));
  RoutingOut out;
  out.r_history.push_back(r);
  out.pose.assign(nj, std::vector<double>(16, 0.0));
  out.activation.assign(nj, 0.0);
  for (int t = 0; t < iterations; ++t) {
    const double lambda = lambda0 * (1.0 + growth * t);
    std::vector<std::vector<double>> var(nj, std::vector<double>(16, 0.0));
    for (std::size_t j = 0; j < nj; ++j) {
      double mass = 0.0;
      for (std::size_t i = 0; i < ni; ++i) mass += r[i][j] * a_in[i];
      mass = std::max(mass, 1e-300);
      double cost = 0.0;
      for (int h = 0; h < 16; ++h) {
        double mu = 0.0;
        for (std::size_t i = 0; i < ni; ++i) mu += (r[i][j] * a_in[i] / mass) * votes[i][j][h];
        double v = 0.0;
        for (std::size_t i = 0; i < ni; ++i) {
          const double d = votes[i][j][h] - mu;
          v += (r[i][j] * a_in[i] / mass) * d * d;
        }
        v += floor;
        out.pose[j][h] = mu;
        var[j][h] = v;
        for (std::size_t i = 0; i < ni; ++i) {
          const double d = votes[i][j][h] - mu;
          const double log_p = -d * d / (2.0 * v) - 0.5 * std::log(2.0 * pi * v);
          cost -= r[i][j] * a_in[i] * log_p;
        }
      }
      const double z = lambda * (beta_a[j] - beta_u[j] * mass - cost);
      const double a = 1.0 / (1.0 + std::exp(-z));
      out.activation[j] = std::clamp(a, eps, 1.0 - eps);
    }
    if (t + 1 == iterations) break;
    for (std::size_t i = 0; i < ni; ++i) {
      std::vector<double> logit(nj);
      for (std::size_t j = 0; j < nj; ++j) {
        double lp = 0.0;
        for (int h = 0; h < 16; ++h) {
          const double d = votes[i][j][h] - out.pose[j][h];
          lp += -d * d / (2.0 * var[j][h]) - 0.5 * std::log(2.0 * pi * var[j][h]);
        }
        logit[j] = lp + std::log(out.activation[j]);
      }
      const double m = *std::max_element(logit.begin(), logit.end());
      double s = 0.0;
      for (std::size_t j = 0; j < nj; ++j) s += std::exp(logit[j] - m);
      for (std::size_t j = 0; j < nj; ++j) r[i][j] = std::exp(logit[j] - m) / s;
    }
    out.r_history.push_back(r);
  }
  return out;
}

struct Box {
  int x0, y0, x1, y1;
};

// Smallest grid rectangle holding every cell >= threshold, found by trying
// all rectangles. nullopt when no cell qualifies.
inline std::optional<Box> scan_box(const Array& grid, double threshold) {
  const int h = static_cast<int>(grid.dim(0)), w = static_cast<int>(grid.dim(1));
  std::optional<Box> best;
  long best_area = std::numeric_limits<long>::max();
  bool any = false;
  for (int i = 0; i < h * w; ++i) any = any || grid[static_cast<std::size_t>(i)] >= threshold;
  if (!any) return std::nullopt;
  for (int y0 = 0; y0 < h; ++y0)
    for (int y1 = y0 + 1; y1 <= h; ++y1)
      for (int x0 = 0; x0 < w; ++x0)
        for (int x1 = x0 + 1; x1 <= w; ++x1) {
          bool covers = true;
          for (int y = 0; y < h && covers; ++y)
            for (int x = 0; x < w && covers; ++x) {
              const bool inside = y >= y0 && y < y1 && x >= x0 && x < x1;
              if (!inside && grid[static_cast<std::size_t>(y * w + x)] >= threshold) covers = false;
            }
          const long area = static_cast<long>(y1 - y0) * (x1 - x0);
          if (covers && area < best_area) {
            best_area = area;
            best = Box{x0, y0, x1, y1};
          }
        }
  return best;
}

// Grid cell box to image pixels: cell g spans [g*S/G, (g+1)*S/G).
inline Box cells_to_pixels(const Box& cells, int grid_w, int grid_h, int img_w, int img_h) {
  return {cells.x0 * img_w / grid_w, cells.y0 * img_h / grid_h, cells.x1 * img_w / grid_w, cells.y1 * img_h / grid_h};
}

struct Confusion {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f = 0;
};

inline Confusion confusion(const std::vector<int>& pred, const std::vector<int>& label) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && label[i] == 1) ++c.tp;
    if (pred[i] == 0 && label[i] == 0) ++c.tn;
    if (pred[i] == 1 && label[i] == 0) ++c.fp;
    if (pred[i] == 0 && label[i] == 1) ++c.fn;
  }
  const double n = static_cast<double>(c.tp + c.tn + c.fp + c.fn);
  c.accuracy = static_cast<double>(c.tp + c.tn) / n;
  c.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  c.f = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
  return c;
}

// Bilinear sample of a [H,W] map at continuous (y,x), half-pixel centres, edge clamped.
inline double bilinear(const Array& map, double y, double x) {
  const long h = static_cast<long>(map.dim(0)), w = static_cast<long>(map.dim(1));
  y = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x - 0.5, 0.0, static_cast<double>(w - 1));
  const long y0 = static_cast<long>(std::floor(y)), x0 = static_cast<long>(std::floor(x));
  const long y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  auto at = [&](long r, long c) { return map[static_cast<std::size_t>(r * w + c)]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

inline Array random_array(eciin::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(std::move(shape));
  for (auto& v : a.data()) v = u(rng);
  return a;
}

}  // namespace oracle
