#pragma once

#include <filesystem>

#include "eciin/array.hpp"

namespace eciin::io {

/// Decodes PNG, JPEG or binary Netpbm (PPM/PGM) into [3, H, W] in [0,1].
/// Grayscale is replicated to three channels; alpha is dropped.
Array read_image(const std::filesystem::path& path);

/// Writes [C, H, W] (C = 1 or 3) with values clamped to [0,1] as 8-bit PNG.
void write_png(const std::filesystem::path& path, const Array& image);

/// Bilinear resize of a [C, H, W] image.
Array resize_image(const Array& image, std::size_t out_h, std::size_t out_w);

}  // namespace eciin::io
