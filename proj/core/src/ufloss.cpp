#include "ufmri/ufloss.hpp"

#include <cmath>

#include "ufmri/rng.hpp"

namespace ufmri {

Tensor grid_patch_features(const CTensor& image, const FeatWeights& w, int stride, int dr, int dc) {
    ad::Var x = ad::Var::constant(to_planes(image));
    ad::Var patches = ad::extract_patches(x, w.patch_size, stride, dr, dc);
    return featnet_infer(w, patches.val());
}

double ufloss_value(const CTensor& x, const CTensor& xhat, const FeatWeights& w,
                    const UflossConfig& cfg, int dr, int dc) {
    UFMRI_CHECK(x.same_shape(xhat), "ufloss: shape mismatch");
    const Tensor f_ref = grid_patch_features(x, w, cfg.stride, dr, dc);
    const Tensor f_hat = grid_patch_features(xhat, w, cfg.stride, dr, dc);
    const int m = f_ref.dim(0);
    double ip = 0;
    for (std::int64_t i = 0; i < f_ref.numel(); ++i) ip += f_ref[i] * f_hat[i];
    return 1.0 - ip / m;
}

ad::Var ufloss_ad(const CTensor& x, ad::Var xhat, const FeatWeights& w, const UflossConfig& cfg,
                  int dr, int dc) {
    using namespace ad;
    UFMRI_CHECK(to_planes(x).same_shape(xhat.val()), "ufloss: shape mismatch");
    const Tensor f_ref = grid_patch_features(x, w, cfg.stride, dr, dc);
    ParamVars vars(w.params, /*trainable=*/false);
    Var patches = extract_patches(xhat, w.patch_size, cfg.stride, dr, dc);
    Var f_hat = featnet_apply(w.arch, vars, patches);
    const int m = f_ref.dim(0);
    // 1 - (1/M) sum_j <f_j, f_hat_j>
    Var ip = dot(f_hat, Var::constant(f_ref));
    return add_scalar(scale(ip, -1.0 / m), 1.0);
}

std::pair<int, int> draw_shift(int stride, std::uint64_t step_seed) {
    Rng rng(step_seed);
    if (stride <= 1) return {0, 0};
    return {rng.uniform_int(0, stride - 1), rng.uniform_int(0, stride - 1)};
}

ReconLossVar recon_loss_ad(const CTensor& x, ad::Var xhat, const FeatWeights* w,
                           const UflossConfig& cfg, std::uint64_t step_seed) {
    using namespace ad;
    ReconLossVar out;
    const Tensor x_planes = to_planes(x);
    UFMRI_CHECK(x_planes.same_shape(xhat.val()), "recon_loss: shape mismatch");
    Var mse = sum_sq_diff(xhat, x_planes);
    out.parts.mse = mse.item();
    if (w == nullptr || cfg.mu == 0.0) {
        out.total = mse;
        out.parts.total = out.parts.mse;
        return out;
    }
    auto [dr, dc] = draw_shift(cfg.stride, step_seed);
    out.dr = dr;
    out.dc = dc;
    Var ufl = ufloss_ad(x, xhat, *w, cfg, dr, dc);
    out.parts.ufloss = ufl.item();
    // mu multiplies the feature-space MSE = 2 * ufloss
    out.total = add(mse, scale(ufl, 2.0 * cfg.mu));
    out.parts.total = out.total.item();
    return out;
}

ReconLossParts recon_loss(const CTensor& x, const CTensor& xhat, const FeatWeights* w,
                          const UflossConfig& cfg, std::uint64_t step_seed) {
    ReconLossParts parts;
    double mse = 0;
    UFMRI_CHECK(x.same_shape(xhat), "recon_loss: shape mismatch");
    for (std::int64_t i = 0; i < x.numel(); ++i) mse += std::norm(xhat[i] - x[i]);
    parts.mse = mse;
    if (w == nullptr || cfg.mu == 0.0) {
        parts.total = mse;
        return parts;
    }
    auto [dr, dc] = draw_shift(cfg.stride, step_seed);
    parts.ufloss = ufloss_value(x, xhat, *w, cfg, dr, dc);
    parts.total = mse + 2.0 * cfg.mu * parts.ufloss;
    return parts;
}

} // namespace ufmri
