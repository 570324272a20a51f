#pragma once

#include <optional>
#include <string>

#include "eciin/backbone.hpp"

namespace eciin::mining {

enum class StrategyKind { WM, CO, BM, CR };

std::string to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);

struct RegionStrategy {
  StrategyKind kind = StrategyKind::CR;
  double threshold = 0.8;
  void validate() const;
};

/// Pixel rectangle [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool operator==(const BBox&) const = default;
};

double iou(const BBox& a, const BBox& b);

/// Bilinear (half-pixel centers) upsampling to target x target, clamped to [0,1].
Array upsample_cam(const cnn::Cam& cam, std::size_t target);

/// Bilinear resize of the [C,H,W] region `box` to [C, out_h, out_w].
Array resize_region(const Array& image, const BBox& box, std::size_t out_h, std::size_t out_w);

/// Upsamples to `target` and thresholds at `threshold` (>= maps to 1).
cnn::Cam binarize(const cnn::Cam& cam, double threshold, std::size_t target);

/// Tight box of the grid cells >= threshold, in grid coordinates.
std::optional<BBox> threshold_box(const Array& grid, double threshold);

/// Weighted multiply: image * upsampled cam.
Array strategy_wm(const Array& image, const cnn::Cam& cam);
/// Concatenation: image channels followed by the upsampled cam.
Array strategy_co(const Array& image, const cnn::Cam& cam);
/// Binary multiply: image * [upsampled cam >= threshold].
Array strategy_bm(const Array& image, const cnn::Cam& cam, double threshold = 0.8);

struct CropResult {
  Array image;      // [C, out_size, out_size]
  BBox box;         // tight box of the highlighted cells in image pixels
  BBox crop;        // square region actually cropped
  bool fallback = false;
};

/// Cropping: thresholds the CAM at its native resolution, maps the tight box
/// of highlighted cells onto image pixels, pads it to a square and resizes
/// the crop to out_size. An empty mask falls back to the central crop of half
/// the image extent.
CropResult strategy_cr(const Array& image, const cnn::Cam& cam, double threshold, std::size_t out_size);

struct MinedRegion {
  Array input;  // eye-stream input
  BBox box;     // highlighted region (whole image for WM/CO, mask box for BM)
  bool fallback = false;
};

/// Applies `strategy` to one [3,S,S] image.
MinedRegion mine_region(const Array& image, const cnn::Cam& cam, const RegionStrategy& strategy,
                        std::size_t out_size);

/// Eye-stream input channel count for a strategy (4 for CO, 3 otherwise).
int eye_input_channels(StrategyKind kind);

}  // namespace eciin::mining
