#include <doctest.h>

#include <cmath>

#include <ufmri/data.hpp>
#include <ufmri/ufloss.hpp>

#include "test_util.hpp"

using namespace ufmri;
using testutil::random_cimage;

namespace {

FeatWeights tiny_weights(int patch, std::uint64_t seed) {
    return FeatWeights::init(featnet_arch_tiny(), patch, seed);
}

// naive per-patch oracle: extract grid patches, run each through the network
// separately, average 1 - <f, f_hat>
double ufloss_naive(const CTensor& x, const CTensor& xhat, const FeatWeights& w, int stride,
                    int dr, int dc) {
    auto px = extract_grid_patches(x, w.patch_size, stride, {dr, dc});
    auto ph = extract_grid_patches(xhat, w.patch_size, stride, {dr, dc});
    REQUIRE(px.size() == ph.size());
    double acc = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        Tensor fa = feature_map(px[i], w);
        Tensor fb = feature_map(ph[i], w);
        double ip = 0;
        for (std::int64_t k = 0; k < fa.numel(); ++k) ip += fa[k] * fb[k];
        acc += 1.0 - ip;
    }
    return acc / static_cast<double>(px.size());
}

// feature-space MSE form of the same quantity
double ufloss_mse_form(const CTensor& x, const CTensor& xhat, const FeatWeights& w, int stride,
                       int dr, int dc) {
    auto px = extract_grid_patches(x, w.patch_size, stride, {dr, dc});
    auto ph = extract_grid_patches(xhat, w.patch_size, stride, {dr, dc});
    double acc = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        Tensor fa = feature_map(px[i], w);
        Tensor fb = feature_map(ph[i], w);
        for (std::int64_t k = 0; k < fa.numel(); ++k) acc += (fa[k] - fb[k]) * (fa[k] - fb[k]);
    }
    return acc / (2.0 * static_cast<double>(px.size()));
}

} // namespace

TEST_CASE("ufloss of an image with itself is zero") {
    FeatWeights w = tiny_weights(16, 1);
    UflossConfig cfg{16, 5, 1.5};
    CTensor x = random_cimage(48, 48, 2);
    CHECK(std::abs(ufloss_value(x, x, w, cfg, 0, 0)) < 1e-6);
    CHECK(std::abs(ufloss_value(x, x, w, cfg, 3, 2)) < 1e-6);
}

TEST_CASE("orthogonal features give ufloss exactly 1") {
    // hand-built net: no residual stages, stem kernels picking the real and
    // imaginary channels, identity head -> images along different input
    // channels map to orthogonal unit features
    FeatNetArch arch;
    arch.base_width = 4;
    arch.stage_blocks = {};
    arch.feat_dim = 4;
    arch.stem_kernel = 3;
    arch.stem_stride = 2;
    arch.stem_pool = false;
    FeatWeights w;
    w.arch = arch;
    w.patch_size = 16;
    w.params = featnet_init(arch, 3);
    for (auto& item : w.params.items)
        for (double& v : item.value.v) v = 0.0;
    // stem out-channel 0 <- input channel 0 (real), out 1 <- input 1 (imag)
    Tensor& stem = w.params.items[static_cast<std::size_t>(w.params.index_of("stem.w"))].value;
    stem[(0 * 2 + 0) * 9 + 4] = 1.0;  // center tap
    stem[(1 * 2 + 1) * 9 + 4] = 1.0;
    Tensor& fc = w.params.items[static_cast<std::size_t>(w.params.index_of("fc.w"))].value;
    for (int i = 0; i < 4; ++i) fc[i * 4 + i] = 1.0;

    UflossConfig cfg{16, 8, 1.5};
    CTensor real_img({32, 32}, std::vector<cplx>(32 * 32, cplx(1, 0)));
    CTensor imag_img({32, 32}, std::vector<cplx>(32 * 32, cplx(0, 1)));
    CHECK(ufloss_value(real_img, imag_img, w, cfg, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("inner-product and feature-MSE forms agree; naive-loop oracle") {
    FeatWeights w = tiny_weights(12, 11);
    UflossConfig cfg{12, 7, 1.5};
    for (std::uint64_t s = 0; s < 3; ++s) {
        CTensor x = random_cimage(40, 40, 20 + s);
        CTensor xhat = random_cimage(40, 40, 30 + s);
        const double lib = ufloss_value(x, xhat, w, cfg, 2, 4);
        CHECK(lib == doctest::Approx(ufloss_naive(x, xhat, w, 7, 2, 4)).epsilon(1e-9));
        CHECK(std::abs(lib - ufloss_mse_form(x, xhat, w, 7, 2, 4)) < 1e-6);
        CHECK(lib >= 0.0);
        CHECK(lib <= 2.0);
        // symmetry at a fixed shift
        CHECK(ufloss_value(xhat, x, w, cfg, 2, 4) == doctest::Approx(lib).epsilon(1e-9));
    }
}

TEST_CASE("ufloss raises when the image is smaller than the patch") {
    FeatWeights w = tiny_weights(32, 41);
    UflossConfig cfg{32, 5, 1.5};
    CTensor a = random_cimage(16, 16, 42), b = random_cimage(16, 16, 43);
    CHECK_THROWS_AS((void)ufloss_value(a, b, w, cfg, 0, 0), Error);
}

TEST_CASE("ufloss gradient w.r.t. the reconstruction matches finite differences") {
    FeatWeights w = tiny_weights(12, 51);
    UflossConfig cfg{12, 6, 1.5};
    CTensor x = random_cimage(48, 48, 52);
    CTensor xhat = random_cimage(48, 48, 53);
    auto f = [&](const std::vector<ad::Var>& in) { return ufloss_ad(x, in[0], w, cfg, 1, 3); };
    const double e = testutil::directional_fd_error(f, {to_planes(xhat)}, 54, 1e-5);
    CHECK(e < 1e-3);
}

TEST_CASE("recon_loss: degenerate weight, identity, reproducible shifts") {
    FeatWeights w = tiny_weights(12, 61);
    CTensor x = random_cimage(32, 32, 62);
    CTensor xhat = random_cimage(32, 32, 63);

    UflossConfig mu0{12, 5, 0.0};
    ReconLossParts p0 = recon_loss(x, xhat, &w, mu0, 1);
    double sq = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) sq += std::norm(xhat[i] - x[i]);
    CHECK(p0.total == doctest::Approx(sq).epsilon(1e-12));
    CHECK(p0.ufloss == 0.0);

    UflossConfig cfg{12, 5, 1.5};
    ReconLossParts pid = recon_loss(x, x, &w, cfg, 2);
    CHECK(std::abs(pid.total) < 1e-9);

    // nullptr weights force the pure-l2 path
    ReconLossParts pn = recon_loss(x, xhat, nullptr, cfg, 3);
    CHECK(pn.total == doctest::Approx(sq).epsilon(1e-12));

    ReconLossParts a = recon_loss(x, xhat, &w, cfg, 77);
    ReconLossParts b = recon_loss(x, xhat, &w, cfg, 77);
    CHECK(a.total == b.total);  // bit-identical
    CHECK(a.ufloss == b.ufloss);
    // combined objective identity: total = mse + 2 mu ufloss
    CHECK(a.total == doctest::Approx(a.mse + 2 * cfg.mu * a.ufloss).epsilon(1e-12));
}

TEST_CASE("recon_loss_ad values agree with the plain evaluation") {
    FeatWeights w = tiny_weights(12, 71);
    UflossConfig cfg{12, 5, 1.5};
    CTensor x = random_cimage(32, 32, 72);
    CTensor xhat = random_cimage(32, 32, 73);
    ReconLossVar lv = recon_loss_ad(x, ad::Var::constant(to_planes(xhat)), &w, cfg, 5);
    ReconLossParts pp = recon_loss(x, xhat, &w, cfg, 5);
    CHECK(lv.parts.total == doctest::Approx(pp.total).epsilon(1e-12));
    CHECK(lv.parts.mse == doctest::Approx(pp.mse).epsilon(1e-12));
    CHECK(lv.parts.ufloss == doctest::Approx(pp.ufloss).epsilon(1e-12));
}

TEST_CASE("mean ufloss over all shifts is invariant to stride-sized translation") {
    FeatWeights w = tiny_weights(8, 81);
    const int stride = 4;
    UflossConfig cfg{8, stride, 1.5};
    // content confined away from borders so no patch content is dropped
    const int n = 40;
    CTensor x = CTensor::zeros({n, n}), xh = CTensor::zeros({n, n});
    CTensor inner_a = random_cimage(12, 12, 82), inner_b = random_cimage(12, 12, 83);
    for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 12; ++c) {
            x[(14 + r) * n + 14 + c] = inner_a[r * 12 + c];
            xh[(14 + r) * n + 14 + c] = inner_b[r * 12 + c];
        }
    CTensor xt = CTensor::zeros({n, n}), xht = CTensor::zeros({n, n});
    for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 12; ++c) {
            xt[(14 + stride + r) * n + 14 + stride + c] = inner_a[r * 12 + c];
            xht[(14 + stride + r) * n + 14 + stride + c] = inner_b[r * 12 + c];
        }
    auto mean_over_shifts = [&](const CTensor& a, const CTensor& b) {
        double acc = 0;
        for (int dr = 0; dr < stride; ++dr)
            for (int dc = 0; dc < stride; ++dc) acc += ufloss_value(a, b, w, cfg, dr, dc);
        return acc / (stride * stride);
    };
    CHECK(mean_over_shifts(x, xh) == doctest::Approx(mean_over_shifts(xt, xht)).epsilon(1e-9));
}
