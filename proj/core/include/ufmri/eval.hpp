#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ufmri/featnet.hpp"
#include "ufmri/metrics.hpp"
#include "ufmri/ufloss.hpp"

namespace ufmri {

struct MetricsRow {
    std::string method;
    std::string slice_id;
    double nrmse = 0;
    double ssim = 0;
    double ufloss = 0;
};

struct StudyCurve {
    std::vector<double> x;        // perturbation level / iteration
    std::vector<double> y;        // UFLoss
    std::vector<double> y_nrmse;  // filled where applicable
};

/// (1-beta) x + beta n with n standard circular complex normal.
CTensor perturb_noise(const CTensor& x, double beta, std::uint64_t seed);

/// Keep the central (H/R)x(W/R) k-space block (rounded to even), zero the
/// rest, transform back.
CTensor perturb_blur(const CTensor& x, double r);

/// UFLoss against x at each level; the noise arm averages over noise_seeds
/// seeds, the blur arm is deterministic. Shift fixed at (0,0).
StudyCurve perturbation_study_noise(const CTensor& x, const std::vector<double>& betas,
                                    const FeatWeights& w, const UflossConfig& cfg,
                                    int noise_seeds = 3, std::uint64_t seed = 0);
StudyCurve perturbation_study_blur(const CTensor& x, const std::vector<double>& rs,
                                   const FeatWeights& w, const UflossConfig& cfg);

struct DeblurResult {
    CTensor final_image;
    StudyCurve curve;  // x = iteration, y = UFLoss, y_nrmse = NRMSE to x_o
    double alpha = 0;
};

/// Gradient descent on L_UFLoss(x_o, x_p) from the R0-blurred start, fixed
/// shift (0,0). Raises an error if the loss rises for 10 consecutive steps.
DeblurResult deblur_descent(const CTensor& x_o, double r0, double alpha, int steps,
                            const FeatWeights& w, const UflossConfig& cfg);

/// 3-point line search (factor 4 up/down around alpha0 at the first step) for
/// a usable deblurring step size.
double tune_deblur_alpha(const CTensor& x_o, double r0, double alpha0, const FeatWeights& w,
                         const UflossConfig& cfg, int rounds = 6);

struct Neighbor {
    int index;
    double inner;
};

/// Top-k bank rows by inner product with f(query), descending, ties broken
/// by lower index.
std::vector<Neighbor> retrieve_neighbors(const Patch& query, const FeatWeights& w,
                                         const MemoryBank& bank, int k);

struct HeatMap {
    Tensor values;  // [gh, gw]
    int stride = 1;
    int patch_size = 0;
};

/// Feature inner products between the source patch and all grid patches of
/// the target slice. Values in [-1, 1]; nothing is clamped here.
HeatMap correlation_map(const Patch& source, const Slice& target, const FeatWeights& w,
                        int stride);

/// Same grid with SSIM (on magnitudes) replacing the feature inner product.
HeatMap ssim_correlation_map(const Patch& source, const Slice& target, int stride);

} // namespace ufmri
