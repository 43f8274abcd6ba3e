#pragma once

#include "ufmri/tensor.hpp"

namespace ufmri {

/// Orthonormal Daubechies-4 2D wavelet transform, periodic boundary,
/// Mallat layout (approximation in the top-left quadrant per level).
/// Both dims must be divisible by 2^levels.
CTensor dwt2(const CTensor& x, int levels);
CTensor idwt2(const CTensor& c, int levels);

/// Complex soft-threshold: c * max(1 - t/|c|, 0). Magnitude shrinks, phase
/// is preserved.
void soft_threshold(CTensor& coeffs, double t);

} // namespace ufmri
