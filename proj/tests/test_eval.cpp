#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <ufmri/data.hpp>
#include <ufmri/eval.hpp>
#include <ufmri/fft.hpp>

#include "test_util.hpp"

using namespace ufmri;
using testutil::random_cimage;

TEST_CASE("nrmse definition cases") {
    CTensor x = random_cimage(16, 16, 1);
    CHECK(nrmse(x, x) == 0.0);
    CTensor zero = CTensor::zeros({16, 16});
    CHECK(nrmse(zero, x) == doctest::Approx(1.0).epsilon(1e-12));
    CTensor twice = x;
    for (cplx& v : twice.v) v *= 2.0;
    CHECK(nrmse(twice, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS((void)nrmse(x, zero), Error);
}

TEST_CASE("ssim identities and monotone degradation") {
    Dataset d = make_phantom_dataset(1, 64, 64, 2);
    const CTensor& x = d.slices[0].image;
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));

    CTensor small = perturb_noise(x, 0.02, 3);
    CTensor large = perturb_noise(x, 0.1, 3);
    CHECK(ssim(x, x) > ssim(small, x));
    CHECK(ssim(small, x) > ssim(large, x));
}

TEST_CASE("ssim of constant images reduces to the luminance term") {
    const double a = 0.8, b = 0.5;
    CTensor ca({16, 16}, std::vector<cplx>(256, cplx(a, 0)));
    CTensor cb({16, 16}, std::vector<cplx>(256, cplx(b, 0)));
    // dynamic range = max |reference| = b; variances and covariance vanish
    const double c1 = (0.01 * b) * (0.01 * b);
    const double want = (2 * a * b + c1) / (a * a + b * b + c1);
    CHECK(ssim(ca, cb) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("perturb_noise: identity at beta 0, statistics, determinism") {
    CTensor x = random_cimage(64, 64, 5);
    CTensor same = perturb_noise(x, 0.0, 9);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);

    const double beta = 0.1;
    CTensor xp = perturb_noise(x, beta, 11);
    double mean_mag = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) mean_mag += std::abs(xp[i] - (1 - beta) * x[i]);
    mean_mag /= static_cast<double>(x.numel());
    // E|n| for a unit-variance circular complex normal = sqrt(pi)/2
    const double want = beta * std::sqrt(3.14159265358979323846) / 2.0;
    CHECK(mean_mag == doctest::Approx(want).epsilon(0.05));

    CTensor xp2 = perturb_noise(x, beta, 11);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(xp[i] == xp2[i]);
    CHECK_THROWS_AS((void)perturb_noise(x, 0.2, 1), Error);
}

TEST_CASE("perturb_blur: identity, band truncation, mask oracle") {
    CTensor x = random_cimage(64, 64, 13);
    CTensor same = perturb_blur(x, 1.0);
    double err = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) err += std::norm(same[i] - x[i]);
    CHECK(std::sqrt(err) / norm2(x) < 1e-6);

    CTensor b4 = perturb_blur(x, 4.0);
    CTensor k = fft2c(b4);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const bool inside = r >= 24 && r < 40 && c >= 24 && c < 40;  // central 16x16
            if (!inside) CHECK(std::abs(k[r * 64 + c]) < 1e-12);
        }

    // R = 2 equals multiplication with the ideal rectangular k-space mask
    CTensor b2 = perturb_blur(x, 2.0);
    CTensor spec = fft2c(x);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const bool inside = r >= 16 && r < 48 && c >= 16 && c < 48;
            if (!inside) spec[r * 64 + c] = 0;
        }
    CTensor oracle = ifft2c(spec);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(std::abs(b2[i] - oracle[i]) < 1e-10);
}

namespace {

FeatWeights tiny_weights(int patch, std::uint64_t seed) {
    return FeatWeights::init(featnet_arch_tiny(), patch, seed);
}

} // namespace

TEST_CASE("perturbation studies: zero at the origin level, well-formed curves") {
    Dataset d = make_phantom_dataset(1, 64, 64, 17);
    FeatWeights w = tiny_weights(16, 18);
    UflossConfig cfg{16, 5, 1.5};
    StudyCurve noise = perturbation_study_noise(d.slices[0].image, {0.0, 0.05, 0.1}, w, cfg, 3, 19);
    REQUIRE(noise.x.size() == 3);
    CHECK(std::abs(noise.y[0]) < 1e-6);
    CHECK(noise.y[1] > 0);

    StudyCurve blur = perturbation_study_blur(d.slices[0].image, {1.0, 2.0, 4.0}, w, cfg);
    CHECK(std::abs(blur.y[0]) < 1e-6);
    CHECK_THROWS_AS((void)perturbation_study_blur(d.slices[0].image, {2.0, 4.0}, w, cfg), Error);
}

TEST_CASE("deblur descent from the optimum does not move") {
    Dataset d = make_phantom_dataset(1, 64, 64, 23);
    FeatWeights w = tiny_weights(16, 24);
    UflossConfig cfg{16, 5, 1.5};
    DeblurResult res = deblur_descent(d.slices[0].image, 1.0, 0.5, 3, w, cfg);
    // R = 1 blur is the identity: gradient vanishes at the global minimum
    CHECK(res.curve.y.front() < 1e-9);
    CHECK(res.curve.y.back() < 1e-9);
    CHECK(nrmse(res.final_image, d.slices[0].image) < 1e-6);
}

TEST_CASE("deblur descent reduces UFLoss and NRMSE on a blurred phantom") {
    Dataset d = make_phantom_dataset(1, 64, 64, 27);
    FeatWeights w = tiny_weights(16, 28);
    UflossConfig cfg{16, 5, 1.5};
    const double alpha = tune_deblur_alpha(d.slices[0].image, 4.0, 1.0, w, cfg);
    DeblurResult res = deblur_descent(d.slices[0].image, 4.0, alpha, 60, w, cfg);
    CHECK(res.curve.y.back() < res.curve.y.front());
    CHECK(res.curve.y_nrmse.back() < res.curve.y_nrmse.front());
}

TEST_CASE("retrieval: self-retrieval, permutation, exhaustive-sort oracle") {
    Dataset d = make_phantom_dataset(2, 64, 64, 31);
    FeatWeights w = tiny_weights(16, 32);
    auto patches = extract_random_patches(d.slices[0], 40, 16, 33);
    MemoryBank bank;
    bank.rows = Tensor::zeros({static_cast<int>(patches.size()), w.arch.feat_dim});
    for (std::size_t i = 0; i < patches.size(); ++i) {
        Tensor f = feature_map(patches[i], w);
        for (int j = 0; j < w.arch.feat_dim; ++j)
            bank.rows[static_cast<std::int64_t>(i) * w.arch.feat_dim + j] = f[j];
    }

    auto top1 = retrieve_neighbors(patches[7], w, bank, 1);
    CHECK(top1[0].index == 7);
    CHECK(top1[0].inner >= 0.999);

    const int n = bank.size();
    auto all = retrieve_neighbors(patches[3], w, bank, n);
    std::vector<int> seen;
    for (const auto& nb : all) seen.push_back(nb.index);
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < n; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);

    // oracle: full sort of all inner products
    Patch q = extract_random_patches(d.slices[1], 1, 16, 34)[0];
    Tensor fq = feature_map(q, w);
    std::vector<Neighbor> ref(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < w.arch.feat_dim; ++j)
            s += bank.rows[static_cast<std::int64_t>(i) * w.arch.feat_dim + j] * fq[j];
        ref[static_cast<std::size_t>(i)] = {i, s};
    }
    std::stable_sort(ref.begin(), ref.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.inner != b.inner ? a.inner > b.inner : a.index < b.index;
    });
    for (int k : {1, 5, 20}) {
        auto got = retrieve_neighbors(q, w, bank, k);
        for (int i = 0; i < k; ++i) {
            CHECK(got[static_cast<std::size_t>(i)].index == ref[static_cast<std::size_t>(i)].index);
            CHECK(got[static_cast<std::size_t>(i)].inner ==
                  doctest::Approx(ref[static_cast<std::size_t>(i)].inner).epsilon(1e-12));
        }
    }
}

TEST_CASE("correlation map: self-location peak, bounds, naive-loop oracle") {
    Dataset d = make_phantom_dataset(1, 64, 64, 41);
    FeatWeights w = tiny_weights(16, 42);
    const Slice& target = d.slices[0];
    // source at a grid-aligned origin (stride 8 -> origin (16, 24))
    Patch src;
    src.row = 16;
    src.col = 24;
    src.pixels = CTensor::zeros({16, 16});
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            src.pixels[r * 16 + c] = target.image[(src.row + r) * 64 + src.col + c];

    HeatMap hm = correlation_map(src, target, w, 8);
    const int gw = grid_count_1d(64, 16, 8, 0);
    CHECK(hm.values[(16 / 8) * gw + (24 / 8)] == doctest::Approx(1.0).epsilon(1e-6));
    for (double v : hm.values.v) {
        CHECK(v <= 1.0 + 1e-9);
        CHECK(v >= -1.0 - 1e-9);
    }

    // naive loop over grid patches
    auto grid = extract_grid_patches(target.image, 16, 8, {0, 0});
    Tensor f_src = feature_map(src, w);
    for (std::size_t m = 0; m < grid.size(); ++m) {
        Tensor f = feature_map(grid[m], w);
        double s = 0;
        for (int j = 0; j < w.arch.feat_dim; ++j) s += f[j] * f_src[j];
        CHECK(hm.values[static_cast<std::int64_t>(m)] == doctest::Approx(s).epsilon(1e-9));
    }
}

TEST_CASE("ssim correlation map: self-location is 1, everything at most 1") {
    Dataset d = make_phantom_dataset(1, 64, 64, 51);
    const Slice& target = d.slices[0];
    Patch src;
    src.row = 8;
    src.col = 8;
    src.pixels = CTensor::zeros({16, 16});
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            src.pixels[r * 16 + c] = target.image[(src.row + r) * 64 + src.col + c];
    HeatMap hm = ssim_correlation_map(src, target, 8);
    const int gw = grid_count_1d(64, 16, 8, 0);
    CHECK(hm.values[1 * gw + 1] == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : hm.values.v) CHECK(v <= 1.0 + 1e-9);

    // naive loop agreement on a few cells
    auto grid = extract_grid_patches(target.image, 16, 8, {0, 0});
    Tensor src_mag = Tensor::zeros({16, 16});
    double ref_max = 0;
    for (std::int64_t i = 0; i < src_mag.numel(); ++i) {
        src_mag[i] = std::abs(src.pixels[i]);
        ref_max = std::max(ref_max, src_mag[i]);
    }
    for (std::size_t m = 0; m < grid.size(); m += 7) {
        Tensor cand = Tensor::zeros({16, 16});
        for (std::int64_t i = 0; i < cand.numel(); ++i) cand[i] = std::abs(grid[m].pixels[i]);
        CHECK(hm.values[static_cast<std::int64_t>(m)] ==
              doctest::Approx(ssim_real(src_mag, cand, ref_max)).epsilon(1e-12));
    }
}
