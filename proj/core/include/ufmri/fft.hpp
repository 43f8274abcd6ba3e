#pragma once

#include "ufmri/tensor.hpp"

namespace ufmri {

/// Centered orthonormal 2D Fourier transform over the last two dims:
/// fftshift(fft2(ifftshift(x))) / sqrt(H*W). DC lands at (H/2, W/2).
/// ifft2c is the exact inverse (and adjoint, the transform is unitary).
CTensor fft2c(const CTensor& x);
CTensor ifft2c(const CTensor& x);

} // namespace ufmri
