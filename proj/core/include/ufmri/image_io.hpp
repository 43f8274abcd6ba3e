#pragma once

#include <string>
#include <vector>

#include "ufmri/tensor.hpp"

namespace ufmri {

/// 8-bit grayscale PNG; values mapped linearly from [lo, hi] (auto range when
/// lo >= hi).
void write_png_gray(const std::string& path, const Tensor& img, double lo = 0, double hi = 0);

/// Pseudocolor PNG (dark blue -> green -> yellow ramp).
void write_png_colormap(const std::string& path, const Tensor& img, double lo = 0, double hi = 0);

Tensor magnitude_image(const CTensor& x);

/// Minimal line-plot rasterizer for study curves.
void write_curve_png(const std::string& path, const std::vector<double>& xs,
                     const std::vector<double>& ys, int width = 640, int height = 480);

} // namespace ufmri
