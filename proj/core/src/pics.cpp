#include "ufmri/pics.hpp"

#include <cmath>
#include <string>

#include "ufmri/rng.hpp"
#include "ufmri/wavelet.hpp"

namespace ufmri {

namespace {

double objective(const CTensor& x, const CTensor& y, const CoilMaps& maps,
                 const SamplingMask& mask, double lam, int levels) {
    CTensor ex = e_forward(x, maps, mask);
    double fid = 0;
    for (std::int64_t i = 0; i < ex.numel(); ++i) fid += std::norm(ex[i] - y[i]);
    CTensor c = dwt2(x, levels);
    double l1 = 0;
    for (const cplx& v : c.v) l1 += std::abs(v);
    return 0.5 * fid + lam * l1;
}

} // namespace

double power_iteration_ehe(const CoilMaps& maps, const SamplingMask& mask, int iters,
                           std::uint64_t seed) {
    Rng rng(seed);
    CTensor z = CTensor::zeros({maps.height(), maps.width()});
    for (cplx& v : z.v) v = cplx(rng.normal(), rng.normal());
    double lmax = 1.0;
    for (int i = 0; i < iters; ++i) {
        CTensor az = e_adjoint(e_forward(z, maps, mask), maps, mask);
        const double n = norm2(az);
        if (n == 0) return 0.0;
        lmax = n / std::max(norm2(z), 1e-300);
        for (std::int64_t k = 0; k < az.numel(); ++k) az[k] /= n;
        z = std::move(az);
    }
    return lmax;
}

PicsResult pics_reconstruct(const CTensor& y, const CoilMaps& maps, const SamplingMask& mask,
                            const PicsConfig& cfg) {
    UFMRI_CHECK(cfg.lam > 0, "pics: lam must be > 0");
    UFMRI_CHECK(cfg.iters >= 1, "pics: iters must be >= 1");
    const int h = maps.height(), w = maps.width();
    const int div = 1 << cfg.wavelet_levels;
    UFMRI_CHECK(h % div == 0 && w % div == 0,
                "pics: wavelet_levels incompatible with image size");

    double step = cfg.step;
    if (step <= 0) {
        const double lmax = power_iteration_ehe(maps, mask, 30, 12345);
        step = 1.0 / (lmax * (1.0 + 1e-3));
    }

    auto prox = [&](CTensor v) {
        CTensor c = dwt2(v, cfg.wavelet_levels);
        soft_threshold(c, cfg.lam * step);
        return idwt2(c, cfg.wavelet_levels);
    };
    auto grad_step = [&](const CTensor& v) {
        CTensor ev = e_forward(v, maps, mask);
        for (std::int64_t i = 0; i < ev.numel(); ++i) ev[i] -= y[i];
        CTensor g = e_adjoint(ev, maps, mask);
        CTensor out = v;
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= step * g[i];
        return out;
    };

    PicsResult res;
    res.step_used = step;
    CTensor x = e_adjoint(y, maps, mask);
    double obj_x = objective(x, y, maps, mask, cfg.lam, cfg.wavelet_levels);
    CTensor v = x;
    double t_mom = 1.0;
    int rise_count = 0;
    for (int k = 0; k < cfg.iters; ++k) {
        CTensor cand = prox(grad_step(v));
        double obj_cand = objective(cand, y, maps, mask, cfg.lam, cfg.wavelet_levels);
        if (obj_cand > obj_x + 1e-12) {
            // momentum overshoot: restart from the last iterate (plain
            // proximal-gradient step, guaranteed non-increasing for step <= 1/L)
            cand = prox(grad_step(x));
            obj_cand = objective(cand, y, maps, mask, cfg.lam, cfg.wavelet_levels);
            t_mom = 1.0;
        }
        if (obj_cand > obj_x + 1e-6 * std::max(1.0, std::abs(obj_x))) {
            if (++rise_count >= 5)
                fail("pics: objective diverging for 5 consecutive iterations; step = " +
                     std::to_string(step));
        } else {
            rise_count = 0;
        }
        const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
        const double mom = (t_mom - 1.0) / t_new;
        v = cand;
        for (std::int64_t i = 0; i < v.numel(); ++i) v[i] += mom * (cand[i] - x[i]);
        x = std::move(cand);
        obj_x = obj_cand;
        t_mom = t_new;
        res.objective.push_back(obj_x);
    }
    res.image = std::move(x);
    return res;
}

} // namespace ufmri
