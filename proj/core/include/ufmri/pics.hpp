#pragma once

#include "ufmri/encode.hpp"
#include "ufmri/tensor.hpp"

namespace ufmri {

/// l1-wavelet regularized least squares, solved by FISTA with a monotone
/// safeguard (momentum restarts whenever a step would raise the objective).
struct PicsConfig {
    double lam = 1e-3;       // l1 weight
    int iters = 200;
    int wavelet_levels = 3;
    double step = 0.0;       // 0 = auto (1/L via power iteration on E^H E)
};

struct PicsResult {
    CTensor image;
    std::vector<double> objective;  // per iteration, 0.5||Ex-y||^2 + lam*||Wx||_1
    double step_used = 0.0;
};

/// Largest eigenvalue of E^H E estimated by power iteration.
double power_iteration_ehe(const CoilMaps& maps, const SamplingMask& mask, int iters = 30,
                           std::uint64_t seed = 0);

PicsResult pics_reconstruct(const CTensor& y, const CoilMaps& maps, const SamplingMask& mask,
                            const PicsConfig& cfg);

} // namespace ufmri
