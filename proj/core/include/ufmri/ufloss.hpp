#pragma once

#include <cstdint>

#include "ufmri/autodiff.hpp"
#include "ufmri/featnet.hpp"

namespace ufmri {

struct UflossConfig {
    int patch_size = 40;
    int stride = 5;
    double mu = 1.5;
};

/// Unit-norm features of all grid patches of an image, [M, d].
Tensor grid_patch_features(const CTensor& image, const FeatWeights& w, int stride, int dr, int dc);

/// (1/M) sum_j (1 - <f(p_j), f(p_hat_j)>) over the stride grid with the same
/// shift applied to both images. Equals half the feature-space MSE; in [0, 2].
double ufloss_value(const CTensor& x, const CTensor& xhat, const FeatWeights& w,
                    const UflossConfig& cfg, int dr = 0, int dc = 0);

/// Differentiable version w.r.t. xhat ([2,H,W] planes); reference features
/// are constants recomputed for the given shift.
ad::Var ufloss_ad(const CTensor& x, ad::Var xhat, const FeatWeights& w, const UflossConfig& cfg,
                  int dr, int dc);

/// Uniform shift in [0, stride)^2 drawn from the step seed.
std::pair<int, int> draw_shift(int stride, std::uint64_t step_seed);

struct ReconLossParts {
    double total = 0;   // ||xhat - x||^2 + mu * feature-space MSE = mse + 2*mu*ufloss
    double mse = 0;     // squared l2 over complex pixels
    double ufloss = 0;  // inner-product form, in [0, 2]
};

struct ReconLossVar {
    ad::Var total;
    ReconLossParts parts;
    int dr = 0, dc = 0;
};

/// Combined training objective; w == nullptr (or mu == 0) degenerates to the
/// pure squared-l2 loss.
ReconLossVar recon_loss_ad(const CTensor& x, ad::Var xhat, const FeatWeights* w,
                           const UflossConfig& cfg, std::uint64_t step_seed);

ReconLossParts recon_loss(const CTensor& x, const CTensor& xhat, const FeatWeights* w,
                          const UflossConfig& cfg, std::uint64_t step_seed);

} // namespace ufmri
