#include "eciin/region.hpp"

#include <algorithm>
#include <cmath>

#include "eciin/errors.hpp"

namespace eciin::mining {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::WM: return "WM";
    case StrategyKind::CO: return "CO";
    case StrategyKind::BM: return "BM";
    case StrategyKind::CR: return "CR";
  }
  return "?";
}

StrategyKind parse_strategy(const std::string& name) {
  if (name == "WM") return StrategyKind::WM;
  if (name == "CO") return StrategyKind::CO;
  if (name == "BM") return StrategyKind::BM;
  if (name == "CR") return StrategyKind::CR;
  throw ConfigError("unknown region strategy '" + name + "' (expected WM, CO, BM or CR)");
}

void RegionStrategy::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("region.threshold must be in (0,1), got " + std::to_string(threshold));
  }
}

double iou(const BBox& a, const BBox& b) {
  const int ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const int iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Source taps for output index o when mapping `in` samples onto `out`.
Tap bilinear_tap(std::size_t o, std::size_t in, std::size_t out) {
  double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in - 1));
  const auto lo = static_cast<std::size_t>(std::floor(src));
  const std::size_t hi = std::min(lo + 1, in - 1);
  return {lo, hi, src - static_cast<double>(lo)};
}

void require_image(const Array& image, const char* op) {
  if (image.ndim() != 3) throw ConfigError(std::string(op) + ": image must be [C,H,W], got " + shape_str(image.shape()));
}

}  // namespace

Array upsample_cam(const cnn::Cam& cam, std::size_t target) {
  const std::size_t h = cam.height(), w = cam.width();
  if (target < h || target < w) {
    throw ConfigError("upsample_cam: target " + std::to_string(target) + " is smaller than the cam grid " +
                      shape_str(cam.grid.shape()));
  }
  Array out({target, target});
  for (std::size_t y = 0; y < target; ++y) {
    const Tap ty = bilinear_tap(y, h, target);
    for (std::size_t x = 0; x < target; ++x) {
      const Tap tx = bilinear_tap(x, w, target);
      const double top = cam.grid[ty.lo * w + tx.lo] * (1.0 - tx.frac) + cam.grid[ty.lo * w + tx.hi] * tx.frac;
      const double bot = cam.grid[ty.hi * w + tx.lo] * (1.0 - tx.frac) + cam.grid[ty.hi * w + tx.hi] * tx.frac;
      out[y * target + x] = std::clamp(top * (1.0 - ty.frac) + bot * ty.frac, 0.0, 1.0);
    }
  }
  return out;
}

Array resize_region(const Array& image, const BBox& box, std::size_t out_h, std::size_t out_w) {
  require_image(image, "resize_region");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > static_cast<int>(w) || box.y1 > static_cast<int>(h) || box.width() < 1 ||
      box.height() < 1) {
    throw ConfigError("resize_region: box outside image");
  }
  const auto bw = static_cast<std::size_t>(box.width()), bh = static_cast<std::size_t>(box.height());
  Array out({c, out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap ty = bilinear_tap(y, bh, out_h);
    const std::size_t y0 = ty.lo + box.y0, y1 = ty.hi + box.y0;
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap tx = bilinear_tap(x, bw, out_w);
      const std::size_t x0 = tx.lo + box.x0, x1 = tx.hi + box.x0;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double* p = image.data().data() + ci * h * w;
        const double top = p[y0 * w + x0] * (1.0 - tx.frac) + p[y0 * w + x1] * tx.frac;
        const double bot = p[y1 * w + x0] * (1.0 - tx.frac) + p[y1 * w + x1] * tx.frac;
        out[(ci * out_h + y) * out_w + x] = top * (1.0 - ty.frac) + bot * ty.frac;
      }
    }
  }
  return out;
}

cnn::Cam binarize(const cnn::Cam& cam, double threshold, std::size_t target) {
  Array up = upsample_cam(cam, target);
  for (auto& v : up.data()) v = v >= threshold ? 1.0 : 0.0;
  return {std::move(up), cam.source_class};
}

std::optional<BBox> threshold_box(const Array& grid, double threshold) {
  if (grid.ndim() != 2) throw ConfigError("threshold_box: grid must be 2-D");
  const int h = static_cast<int>(grid.dim(0)), w = static_cast<int>(grid.dim(1));
  BBox box{w, h, 0, 0};
  bool any = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (grid[static_cast<std::size_t>(y * w + x)] >= threshold) {
        any = true;
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
  if (!any) return std::nullopt;
  return box;
}

Array strategy_wm(const Array& image, const cnn::Cam& cam) {
  require_image(image, "strategy_wm");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h != w) throw ConfigError("strategy_wm: image must be square");
  const Array up = upsample_cam(cam, h);
  Array out(image.shape());
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t p = 0; p < h * w; ++p) out[ci * h * w + p] = image[ci * h * w + p] * up[p];
  return out;
}

Array strategy_co(const Array& image, const cnn::Cam& cam) {
  require_image(image, "strategy_co");
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h != w) throw ConfigError("strategy_co: image must be square");
  return ops::concat({image, upsample_cam(cam, h).reshaped({1, h, w})}, 0);
}

Array strategy_bm(const Array& image, const cnn::Cam& cam, double threshold) {
  require_image(image, "strategy_bm");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("strategy_bm: threshold must be in (0,1)");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h != w) throw ConfigError("strategy_bm: image must be square");
  const Array up = upsample_cam(cam, h);
  Array out(image.shape());
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t p = 0; p < h * w; ++p) out[ci * h * w + p] = image[ci * h * w + p] * (up[p] >= threshold ? 1.0 : 0.0);
  return out;
}

CropResult strategy_cr(const Array& image, const cnn::Cam& cam, double threshold, std::size_t out_size) {
  require_image(image, "strategy_cr");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("strategy_cr: threshold must be in (0,1)");
  if (out_size < 1) throw ConfigError("strategy_cr: out_size must be >= 1");
  const int ih = static_cast<int>(image.dim(1)), iw = static_cast<int>(image.dim(2));
  const int gh = static_cast<int>(cam.height()), gw = static_cast<int>(cam.width());

  CropResult result;
  const auto cells = threshold_box(cam.grid, threshold);
  if (!cells) {
    const int side_w = std::max(1, iw / 2), side_h = std::max(1, ih / 2);
    result.box = {(iw - side_w) / 2, (ih - side_h) / 2, (iw - side_w) / 2 + side_w, (ih - side_h) / 2 + side_h};
    result.crop = result.box;
    result.fallback = true;
  } else {
    // Cell g covers pixels [g * S / G, (g + 1) * S / G).
    result.box = {cells->x0 * iw / gw, cells->y0 * ih / gh, cells->x1 * iw / gw, cells->y1 * ih / gh};
    const int side = std::min(std::max(result.box.width(), result.box.height()), std::min(iw, ih));
    auto place = [side](int lo, int len, int extent) {
      int start = lo - (side - len) / 2;
      return std::clamp(start, 0, extent - side);
    };
    const int x0 = place(result.box.x0, result.box.width(), iw);
    const int y0 = place(result.box.y0, result.box.height(), ih);
    result.crop = {x0, y0, x0 + side, y0 + side};
  }
  result.image = resize_region(image, result.crop, out_size, out_size);
  return result;
}

MinedRegion mine_region(const Array& image, const cnn::Cam& cam, const RegionStrategy& strategy,
                        std::size_t out_size) {
  strategy.validate();
  require_image(image, "mine_region");
  const int ih = static_cast<int>(image.dim(1)), iw = static_cast<int>(image.dim(2));
  const BBox whole{0, 0, iw, ih};
  switch (strategy.kind) {
    case StrategyKind::WM: return {strategy_wm(image, cam), whole, false};
    case StrategyKind::CO: return {strategy_co(image, cam), whole, false};
    case StrategyKind::BM: {
      const cnn::Cam bin = binarize(cam, strategy.threshold, image.dim(1));
      const auto box = threshold_box(bin.grid, 0.5);
      return {strategy_bm(image, cam, strategy.threshold), box.value_or(BBox{}), !box.has_value()};
    }
    case StrategyKind::CR: {
      CropResult cr = strategy_cr(image, cam, strategy.threshold, out_size);
      return {std::move(cr.image), cr.box, cr.fallback};
    }
  }
  throw ConfigError("mine_region: unknown strategy");
}

int eye_input_channels(StrategyKind kind) { return kind == StrategyKind::CO ? 4 : 3; }

}  // namespace eciin::mining
