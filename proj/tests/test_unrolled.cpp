#include <doctest.h>

#include <cmath>

#include <ufmri/fft.hpp>
#include <ufmri/metrics.hpp>
#include <ufmri/unrolled.hpp>

#include "test_util.hpp"

using namespace ufmri;
using testutil::random_cimage;
using testutil::random_tensor;

namespace {

CoilMaps unit_single_coil(int h, int w) {
    CTensor m({1, h, w}, std::vector<cplx>(static_cast<std::size_t>(h) * w, cplx(1, 0)));
    return CoilMaps{std::move(m)};
}

SamplingMask full_mask(int h, int w) {
    SamplingMask m;
    m.h = h;
    m.w = w;
    m.acceleration = 1.0;
    m.mask.assign(static_cast<std::size_t>(h) * w, 1);
    return m;
}

} // namespace

TEST_CASE("denoise preserves shape on 64x64 and 320x320 and is deterministic") {
    ReconWeights w = ReconWeights::init(unet_arch_tiny(), 0.05, 1);
    for (int n : {64, 320}) {
        CTensor x = random_cimage(n, n, 2);
        CTensor z1 = denoise(x, w);
        CHECK(z1.shape == x.shape);
        CTensor z2 = denoise(x, w);
        for (std::int64_t i = 0; i < z1.numel(); ++i) CHECK(z1[i] == z2[i]);
    }
}

TEST_CASE("freshly initialized denoiser is the identity (zero final conv)") {
    ReconWeights w = ReconWeights::init(unet_arch_desk(), 0.05, 3);
    CTensor x = random_cimage(32, 32, 4);
    CTensor z = denoise(x, w);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(std::abs(z[i] - x[i]) < 1e-12);
    CHECK(w.lam() == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("denoiser input gradient matches finite differences") {
    ReconWeights w = ReconWeights::init(unet_arch_tiny(), 0.05, 5);
    // give the final conv real content so gradients are nontrivial
    auto& fin = w.params.items[static_cast<std::size_t>(w.params.index_of("final.w"))].value;
    Rng rng(6);
    for (double& v : fin.v) v = 0.05 * rng.normal();

    Tensor ref = random_tensor({2, 16, 16}, 7);
    auto f = [&](const std::vector<ad::Var>& in) {
        ParamVars vars(w.params, false);
        ad::Var out = unet_apply(w.arch, vars, ad::reshape(in[0], {1, 2, 16, 16}));
        return ad::sum_sq_diff(ad::reshape(out, {2, 16, 16}), ref);
    };
    CHECK(testutil::directional_fd_error(f, {random_tensor({2, 16, 16}, 8)}, 9) < 1e-3);
}

TEST_CASE("modl_forward: identity denoiser + full mask reproduces ifft2c(y)") {
    const int n = 32;
    CoilMaps maps = unit_single_coil(n, n);
    SamplingMask mask = full_mask(n, n);
    CTensor x = random_cimage(n, n, 11);
    CTensor y = e_forward(x, maps, mask);

    ReconWeights w = ReconWeights::init(unet_arch_tiny(), 0.05, 12);
    UnrollConfig cfg;
    cfg.unrolls = 1;
    cfg.cg_steps = 6;
    CTensor out = modl_forward(y, maps, mask, w, cfg);
    CTensor want({n, n}, ifft2c(y).v);
    CHECK(nrmse(out, want) < 1e-3);

    cfg.unrolls = 0;
    CTensor zf = modl_forward(y, maps, mask, w, cfg);
    CTensor ehy = e_adjoint(y, maps, mask);
    for (std::int64_t i = 0; i < zf.numel(); ++i) CHECK(zf[i] == ehy[i]);
}

TEST_CASE("modl_forward with zero measurements and zero denoiser returns zero") {
    const int n = 16;
    CoilMaps maps = synth_coil_maps(n, n, 2, 21);
    SamplingMask mask = make_mask_1d_random(n, n, 2.0, 0.2, 22);
    ReconWeights w = ReconWeights::init(unet_arch_tiny(), 0.05, 23);  // final conv zero
    UnrollConfig cfg;
    cfg.unrolls = 3;
    cfg.cg_steps = 4;
    CTensor y = CTensor::zeros({2, n, n});
    CTensor out = modl_forward(y, maps, mask, w, cfg);
    CHECK(norm2(out) < 1e-12);
}

TEST_CASE("CG reduces the per-unroll data-consistency residual") {
    const int n = 64;
    Dataset d = make_phantom_dataset(1, n, n, 31);
    CoilMaps maps = synth_coil_maps(n, n, 4, 32);
    SamplingMask mask = make_mask_1d_random(n, n, 3.0, 0.1, 33);
    CTensor y = e_forward(d.slices[0].image, maps, mask);

    ReconWeights w = ReconWeights::init(unet_arch_tiny(), 0.05, 34);
    Rng rng(35);
    auto& fin = w.params.items[static_cast<std::size_t>(w.params.index_of("final.w"))].value;
    for (double& v : fin.v) v = 0.05 * rng.normal();

    const double lam = w.lam();
    auto apply_a = [&](const CTensor& v) {
        CTensor av = e_adjoint(e_forward(v, maps, mask), maps, mask);
        for (std::int64_t i = 0; i < av.numel(); ++i) av[i] += lam * v[i];
        return av;
    };
    CTensor ehy = e_adjoint(y, maps, mask);
    UnrollConfig cfg;
    cfg.cg_steps = 6;
    CTensor xk = ehy;  // x^0
    for (int k = 0; k < 3; ++k) {
        CTensor z = denoise(xk, w);
        CTensor rhs = ehy;
        for (std::int64_t i = 0; i < rhs.numel(); ++i) rhs[i] += lam * z[i];
        auto residual = [&](const CTensor& v) {
            CTensor av = apply_a(v);
            double s = 0;
            for (std::int64_t i = 0; i < av.numel(); ++i) s += std::norm(av[i] - rhs[i]);
            return std::sqrt(s);
        };
        CTensor xk1 = cg_solve(rhs, maps, mask, lam, cfg.cg_steps, xk);
        CHECK(residual(xk1) < residual(xk));
        xk = std::move(xk1);
    }
}

TEST_CASE("one unrolled step: gradient w.r.t. all weights matches finite differences") {
    const int n = 16;
    Dataset d = make_phantom_dataset(1, 64, 64, 41);
    // crop to 16x16 for speed
    CTensor target = CTensor::zeros({n, n});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) target[r * n + c] = d.slices[0].image[(24 + r) * 64 + 24 + c];
    CoilMaps maps = synth_coil_maps(n, n, 2, 42);
    SamplingMask mask = make_mask_1d_random(n, n, 2.0, 0.15, 43);
    CTensor y = e_forward(target, maps, mask);
    auto maps_p = std::make_shared<const CoilMaps>(maps);
    auto mask_p = std::make_shared<const SamplingMask>(mask);

    ReconWeights w = ReconWeights::init(unet_arch_tiny(), 0.05, 44);
    Rng rng(45);
    auto& fin = w.params.items[static_cast<std::size_t>(w.params.index_of("final.w"))].value;
    for (double& v : fin.v) v = 0.05 * rng.normal();

    UnrollConfig cfg;
    cfg.unrolls = 1;
    cfg.cg_steps = 4;
    const Tensor target_planes = to_planes(target);

    // loss as a function of the full parameter vector, along a random direction
    ParamVars probe(w.params, true);
    ad::Var xhat = modl_forward_ad(y, maps_p, mask_p, w.arch, probe, cfg);
    ad::Var loss = ad::sum_sq_diff(xhat, target_planes);
    ad::backward(loss);
    std::vector<Tensor> grads = probe.collect_grads();

    Rng dir_rng(46);
    std::vector<Tensor> dirs;
    double dn = 0;
    for (const auto& item : w.params.items) {
        Tensor dd = Tensor::zeros(item.value.shape);
        for (double& v : dd.v) v = dir_rng.normal();
        dn += norm2(dd) * norm2(dd);
        dirs.push_back(std::move(dd));
    }
    dn = std::sqrt(dn);
    double analytic = 0;
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::int64_t k = 0; k < grads[i].numel(); ++k) analytic += grads[i][k] * dirs[i][k] / dn;

    auto eval_at = [&](double t) {
        ReconWeights wt = w;
        for (std::size_t i = 0; i < wt.params.items.size(); ++i)
            for (std::int64_t k = 0; k < wt.params.items[i].value.numel(); ++k)
                wt.params.items[i].value[k] += t * dirs[i][k] / dn;
        ParamVars vars(wt.params, false);
        ad::Var xh = modl_forward_ad(y, maps_p, mask_p, wt.arch, vars, cfg);
        return ad::sum_sq_diff(xh, target_planes).item();
    };
    const double eps = 1e-5;
    const double fd = (eval_at(eps) - eval_at(-eps)) / (2 * eps);
    CHECK(std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-12}) < 1e-2);
}

TEST_CASE("train_modl improves over zero-filled on a micro dataset") {
    Dataset train_ds = make_phantom_dataset(12, 64, 64, 51);
    Dataset val_ds = make_phantom_dataset(3, 64, 64, 52, Split::val);
    SampleSpec spec;
    spec.accel = 3.0;
    auto train = build_samples(train_ds, spec, 53);
    auto val = build_samples(val_ds, spec, 54);

    UnrollConfig cfg;
    cfg.unrolls = 2;
    cfg.cg_steps = 4;
    cfg.epochs = 2;
    cfg.lr = 2e-3;
    cfg.batch = 4;
    UflossConfig uf{40, 5, 0.0};

    int steps_seen = 0;
    TrainModlResult res = train_modl(train, val, nullptr, unet_arch_tiny(), cfg, uf, 55,
                                     [&](int, const ReconLossParts& p) {
                                         CHECK(std::isfinite(p.total));
                                         ++steps_seen;
                                     });
    CHECK(steps_seen == 2 * 3);  // 12 samples / batch 4 = 3 steps per epoch
    REQUIRE(res.val_log.size() == 2);
    CHECK(res.best_epoch >= 0);
    CHECK(res.best.lam() >= 0.0);

    double zf_nrmse = 0;
    for (const auto& s : val) zf_nrmse += nrmse(e_adjoint(s.y, s.maps, s.mask), s.target.image);
    zf_nrmse /= static_cast<double>(val.size());
    CHECK(res.val_log.back().nrmse < zf_nrmse);
}

TEST_CASE("mu = 0 with a feature net follows the same path as the pure-l2 arm") {
    Dataset train_ds = make_phantom_dataset(4, 64, 64, 61);
    SampleSpec spec;
    auto train = build_samples(train_ds, spec, 62);
    UnrollConfig cfg;
    cfg.unrolls = 1;
    cfg.cg_steps = 2;
    cfg.epochs = 1;
    cfg.lr = 1e-3;
    cfg.batch = 2;
    FeatWeights fw = FeatWeights::init(featnet_arch_tiny(), 40, 63);

    UflossConfig mu0{40, 5, 0.0};
    TrainModlResult a = train_modl(train, {}, &fw, unet_arch_tiny(), cfg, mu0, 64);
    TrainModlResult b = train_modl(train, {}, nullptr, unet_arch_tiny(), cfg, mu0, 64);
    for (std::size_t i = 0; i < a.last.params.items.size(); ++i)
        for (std::int64_t k = 0; k < a.last.params.items[i].value.numel(); ++k)
            CHECK(a.last.params.items[i].value[k] == b.last.params.items[i].value[k]);
}

TEST_CASE("recon checkpoints round-trip through the container") {
    ReconWeights w = ReconWeights::init(unet_arch_tiny(), 0.07, 71);
    Rng rng(72);
    for (auto& item : w.params.items)
        for (double& v : item.value.v) v += 0.01 * rng.normal();
    save_recon("/tmp/ufmri_test_recon.ufna", w, {{"seed", "71"}});
    ReconWeights back = load_recon("/tmp/ufmri_test_recon.ufna");
    CHECK(back.lam() == doctest::Approx(w.lam()).epsilon(1e-12));
    CTensor x = random_cimage(32, 32, 73);
    CTensor za = denoise(x, w), zb = denoise(x, back);
    for (std::int64_t i = 0; i < za.numel(); ++i) CHECK(za[i] == zb[i]);
}
