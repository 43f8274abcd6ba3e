#pragma once

#include "ufmri/tensor.hpp"

namespace ufmri {

/// ||xhat - x||_2 / ||x||_2 over complex values.
double nrmse(const CTensor& xhat, const CTensor& x);

/// Mean local SSIM on magnitude images: 7x7 Gaussian window (sigma 1.5),
/// standard stabilizers, dynamic range = max magnitude of the reference.
double ssim(const CTensor& xhat, const CTensor& x);

/// SSIM between two real-valued images with an explicit dynamic range.
double ssim_real(const Tensor& a, const Tensor& b, double dynamic_range);

} // namespace ufmri
