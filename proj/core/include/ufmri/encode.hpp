#pragma once

#include <cstdint>

#include "ufmri/data.hpp"
#include "ufmri/tensor.hpp"

namespace ufmri {

/// Coil sensitivity profiles S, normalized so sum_c |S_c|^2 = 1 pixelwise.
struct CoilMaps {
    CTensor maps;  // [C, H, W]

    int ncoils() const { return maps.dim(0); }
    int height() const { return maps.dim(1); }
    int width() const { return maps.dim(2); }
};

/// Binary k-space sampling pattern U.
struct SamplingMask {
    std::vector<std::uint8_t> mask;  // [H, W], row-major
    int h = 0, w = 0;
    double acceleration = 1.0;
    int calib_h = 0, calib_w = 0;    // fully sampled center block (rows x cols)
    double center_fraction = 0.0;    // for 1D masks
    double min_radius = 0.0;         // Poisson-disk inner radius, 0 otherwise

    std::uint8_t at(int r, int c) const { return mask[static_cast<std::size_t>(r) * w + c]; }
    double fraction() const;
};

/// Retrospectively undersampled slice: y = E(target), zeros where mask is 0.
struct KSpaceSample {
    CTensor y;  // [C, H, W]
    CoilMaps maps;
    SamplingMask mask;
    Slice target;
};

/// 1D random undersampling: whole columns, fully sampled contiguous center
/// block of floor(center_fraction * W) columns counted inside the
/// round(W / acceleration) column budget.
SamplingMask make_mask_1d_random(int h, int w, double acceleration = 5.0,
                                 double center_fraction = 0.08, std::uint64_t seed = 0);

/// Variable-density Poisson-disk mask by dart throwing; the dart radius grows
/// with distance from the k-space center and is rescaled by bisection until
/// the sampling rate lands within ~5% of 1/acceleration. The central
/// calib x calib block is always fully sampled.
SamplingMask make_mask_poisson(int h, int w, double acceleration = 8.0, int calib = 24,
                               std::uint64_t seed = 0);

/// Smooth synthetic coil profiles (Gaussian lobes anchored at the border),
/// normalized pixelwise. Substitute for measured sensitivity maps.
CoilMaps synth_coil_maps(int h, int w, int ncoils, std::uint64_t seed = 0);

/// Load precomputed maps ([C, H, W] complex) and normalize pixelwise.
CoilMaps normalize_coil_maps(CTensor maps);

/// E x = mask .* fft2c(S_c .* x) per coil.
CTensor e_forward(const CTensor& x, const CoilMaps& maps, const SamplingMask& mask);
/// E^H y = sum_c conj(S_c) .* ifft2c(mask .* y_c).
CTensor e_adjoint(const CTensor& y, const CoilMaps& maps, const SamplingMask& mask);

/// Runs exactly `niter` CG iterations on (E^H E + lam I) x = rhs starting
/// from x0 (early exit only when the residual is exactly zero). lam = 0 is
/// allowed; the caller accepts the least-norm iterate in that case.
CTensor cg_solve(const CTensor& rhs, const CoilMaps& maps, const SamplingMask& mask, double lam,
                 int niter, const CTensor& x0);

/// Builds y = E(target) with zeros at unsampled locations.
KSpaceSample make_sample(const Slice& target, const CoilMaps& maps, const SamplingMask& mask);

void save_mask(const SamplingMask& m, const std::string& path,
               const std::map<std::string, std::string>& meta = {});
SamplingMask load_mask(const std::string& path);

} // namespace ufmri
