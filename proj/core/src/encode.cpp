#include "ufmri/encode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ufmri/container.hpp"
#include "ufmri/fft.hpp"
#include "ufmri/rng.hpp"

namespace ufmri {

double SamplingMask::fraction() const {
    std::int64_t ones = 0;
    for (auto m : mask) ones += m;
    return static_cast<double>(ones) / static_cast<double>(mask.size());
}

SamplingMask make_mask_1d_random(int h, int w, double acceleration, double center_fraction,
                                 std::uint64_t seed) {
    UFMRI_CHECK(h >= 1 && w >= 1, "mask shape must be positive");
    UFMRI_CHECK(acceleration >= 1.0, "acceleration must be >= 1");
    const int center_cols = static_cast<int>(std::floor(center_fraction * w));
    UFMRI_CHECK(center_cols >= 1, "center_fraction * W must be >= 1");
    const int budget = static_cast<int>(std::lround(w / acceleration));
    UFMRI_CHECK(center_cols <= budget,
                "1D mask: fully sampled center exceeds the sampling budget at this acceleration");

    std::vector<std::uint8_t> col_on(static_cast<std::size_t>(w), 0);
    const int c0 = (w - center_cols) / 2;
    for (int c = c0; c < c0 + center_cols; ++c) col_on[static_cast<std::size_t>(c)] = 1;

    std::vector<int> periph;
    for (int c = 0; c < w; ++c)
        if (!col_on[static_cast<std::size_t>(c)]) periph.push_back(c);
    Rng rng(seed);
    std::shuffle(periph.begin(), periph.end(), rng.engine());
    for (int i = 0; i < budget - center_cols && i < static_cast<int>(periph.size()); ++i)
        col_on[static_cast<std::size_t>(periph[static_cast<std::size_t>(i)])] = 1;

    SamplingMask m;
    m.h = h;
    m.w = w;
    m.acceleration = acceleration;
    m.center_fraction = center_fraction;
    m.calib_h = h;
    m.calib_w = center_cols;
    m.mask.resize(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) m.mask[static_cast<std::size_t>(r) * w + c] = col_on[static_cast<std::size_t>(c)];
    return m;
}

namespace {

// Dart throwing with radius r(rho) = t * (1 + 2 rho / rho_max). Returns the
// achieved fraction.
double throw_darts(int h, int w, double t, const std::vector<int>& order,
                   std::vector<std::uint8_t>& out) {
    std::fill(out.begin(), out.end(), 0);
    const double cy = h / 2.0, cx = w / 2.0;
    const double rho_max = std::sqrt(cy * cy + cx * cx);
    const double r_max = t * 3.0;
    const int cell = std::max(1, static_cast<int>(std::floor(r_max)));
    const int gh = (h + cell - 1) / cell, gw = (w + cell - 1) / cell;
    std::vector<std::vector<std::pair<int, int>>> grid(static_cast<std::size_t>(gh) * gw);
    auto radius_at = [&](double y, double x) {
        const double rho = std::hypot(y - cy, x - cx);
        return t * (1.0 + 2.0 * rho / rho_max);
    };
    std::int64_t accepted = 0;
    for (int idx : order) {
        const int r = idx / w, c = idx % w;
        const double rad = radius_at(r, c);
        const int gr = r / cell, gc = c / cell;
        const int reach = static_cast<int>(std::ceil(rad / cell)) + 1;
        bool ok = true;
        for (int dr = -reach; ok && dr <= reach; ++dr) {
            const int nr = gr + dr;
            if (nr < 0 || nr >= gh) continue;
            for (int dc = -reach; ok && dc <= reach; ++dc) {
                const int nc = gc + dc;
                if (nc < 0 || nc >= gw) continue;
                for (const auto& [pr, pc] : grid[static_cast<std::size_t>(nr) * gw + nc]) {
                    const double d = std::hypot(pr - r, pc - c);
                    // reject against the larger of the two radii
                    if (d < std::max(rad, radius_at(pr, pc))) {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if (ok) {
            grid[static_cast<std::size_t>(gr) * gw + gc].emplace_back(r, c);
            out[static_cast<std::size_t>(r) * w + c] = 1;
            ++accepted;
        }
    }
    return static_cast<double>(accepted) / static_cast<double>(h) / static_cast<double>(w);
}

} // namespace

SamplingMask make_mask_poisson(int h, int w, double acceleration, int calib, std::uint64_t seed) {
    UFMRI_CHECK(h >= 1 && w >= 1, "mask shape must be positive");
    UFMRI_CHECK(acceleration >= 1.0, "acceleration must be >= 1");
    UFMRI_CHECK(calib >= 0 && calib <= std::min(h, w), "calibration region larger than the mask");

    SamplingMask m;
    m.h = h;
    m.w = w;
    m.acceleration = acceleration;
    m.calib_h = calib;
    m.calib_w = calib;
    m.mask.assign(static_cast<std::size_t>(h) * w, 0);

    if (acceleration == 1.0) {
        std::fill(m.mask.begin(), m.mask.end(), 1);
        return m;
    }

    const double target = 1.0 / acceleration;
    Rng rng(seed);
    std::vector<int> order(static_cast<std::size_t>(h) * w);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());

    // Bisection on the base radius t; fraction is monotone decreasing in t.
    std::vector<std::uint8_t> darts(m.mask.size());
    double lo = 0.25, hi = 4.0 * std::sqrt(acceleration);
    double best_t = -1.0, best_err = 1e30;
    std::vector<std::uint8_t> best;
    for (int iter = 0; iter < 40; ++iter) {
        const double t = 0.5 * (lo + hi);
        double frac = throw_darts(h, w, t, order, darts);
        // account for forced calibration samples
        std::int64_t extra = 0;
        const int r0 = (h - calib) / 2, c0 = (w - calib) / 2;
        for (int r = r0; r < r0 + calib; ++r)
            for (int c = c0; c < c0 + calib; ++c)
                if (!darts[static_cast<std::size_t>(r) * w + c]) ++extra;
        frac += static_cast<double>(extra) / static_cast<double>(h) / static_cast<double>(w);
        const double err = std::abs(frac - target) / target;
        if (err < best_err) {
            best_err = err;
            best_t = t;
            best = darts;
        }
        if (err < 0.02) break;
        if (frac > target) lo = t;
        else hi = t;
    }
    UFMRI_CHECK(best_err <= 0.10,
                "poisson mask: could not reach the target sampling rate after radius rescaling");

    m.mask = best;
    m.min_radius = best_t;
    const int r0 = (h - calib) / 2, c0 = (w - calib) / 2;
    for (int r = r0; r < r0 + calib; ++r)
        for (int c = c0; c < c0 + calib; ++c) m.mask[static_cast<std::size_t>(r) * w + c] = 1;
    return m;
}

CoilMaps normalize_coil_maps(CTensor maps) {
    UFMRI_CHECK(maps.ndim() == 3, "coil maps must be [C, H, W]");
    const int c = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < hw; ++i) {
        double s = 0;
        for (int k = 0; k < c; ++k) s += std::norm(maps[k * hw + i]);
        UFMRI_CHECK(s > 0, "coil maps vanish at a pixel; cannot normalize");
        const double inv = 1.0 / std::sqrt(s);
        for (int k = 0; k < c; ++k) maps[k * hw + i] *= inv;
    }
    return CoilMaps{std::move(maps)};
}

CoilMaps synth_coil_maps(int h, int w, int ncoils, std::uint64_t seed) {
    UFMRI_CHECK(ncoils >= 1, "need at least one coil");
    Rng rng(seed);
    CTensor maps = CTensor::zeros({ncoils, h, w});
    const double sigma = 0.75 * std::max(h, w);
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int c = 0; c < ncoils; ++c) {
        const double ang = two_pi * (c + rng.uniform(-0.1, 0.1)) / ncoils;
        // lobe center just outside the FOV
        const double cy = h / 2.0 + 0.8 * h * std::sin(ang);
        const double cx = w / 2.0 + 0.8 * w * std::cos(ang);
        const double phase0 = rng.uniform(0.0, two_pi);
        const double py = rng.uniform(-0.05, 0.05), px = rng.uniform(-0.05, 0.05);
        for (int r = 0; r < h; ++r)
            for (int k = 0; k < w; ++k) {
                const double d2 = (r - cy) * (r - cy) + (k - cx) * (k - cx);
                const double mag = std::exp(-d2 / (2 * sigma * sigma));
                const double ph = phase0 + py * r + px * k;
                maps[(static_cast<std::int64_t>(c) * h + r) * w + k] =
                    mag * cplx(std::cos(ph), std::sin(ph));
            }
    }
    return normalize_coil_maps(std::move(maps));
}

CTensor e_forward(const CTensor& x, const CoilMaps& maps, const SamplingMask& mask) {
    UFMRI_CHECK(x.ndim() == 2, "e_forward expects image [H, W]");
    const int c = maps.ncoils(), h = x.dim(0), w = x.dim(1);
    UFMRI_CHECK(maps.height() == h && maps.width() == w, "e_forward: maps shape mismatch");
    UFMRI_CHECK(mask.h == h && mask.w == w, "e_forward: mask shape mismatch");
    CTensor weighted = CTensor::zeros({c, h, w});
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int k = 0; k < c; ++k)
        for (std::int64_t i = 0; i < hw; ++i)
            weighted[k * hw + i] = maps.maps[k * hw + i] * x[i];
    CTensor y = fft2c(weighted);
    for (int k = 0; k < c; ++k)
        for (std::int64_t i = 0; i < hw; ++i)
            if (!mask.mask[static_cast<std::size_t>(i)]) y[k * hw + i] = 0;
    return y;
}

CTensor e_adjoint(const CTensor& y, const CoilMaps& maps, const SamplingMask& mask) {
    UFMRI_CHECK(y.ndim() == 3, "e_adjoint expects k-space [C, H, W]");
    const int c = y.dim(0), h = y.dim(1), w = y.dim(2);
    UFMRI_CHECK(maps.ncoils() == c && maps.height() == h && maps.width() == w,
                "e_adjoint: maps shape mismatch");
    UFMRI_CHECK(mask.h == h && mask.w == w, "e_adjoint: mask shape mismatch");
    CTensor masked = y;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int k = 0; k < c; ++k)
        for (std::int64_t i = 0; i < hw; ++i)
            if (!mask.mask[static_cast<std::size_t>(i)]) masked[k * hw + i] = 0;
    CTensor imgs = ifft2c(masked);
    CTensor out = CTensor::zeros({h, w});
    for (int k = 0; k < c; ++k)
        for (std::int64_t i = 0; i < hw; ++i)
            out[i] += std::conj(maps.maps[k * hw + i]) * imgs[k * hw + i];
    return out;
}

CTensor cg_solve(const CTensor& rhs, const CoilMaps& maps, const SamplingMask& mask, double lam,
                 int niter, const CTensor& x0) {
    UFMRI_CHECK(lam >= 0.0, "cg_solve: lam must be >= 0");
    UFMRI_CHECK(rhs.same_shape(x0), "cg_solve: rhs/x0 shape mismatch");
    auto apply_a = [&](const CTensor& v) {
        CTensor av = e_adjoint(e_forward(v, maps, mask), maps, mask);
        for (std::int64_t i = 0; i < av.numel(); ++i) av[i] += lam * v[i];
        return av;
    };
    CTensor x = x0;
    CTensor r = rhs;
    {
        CTensor ax = apply_a(x);
        for (std::int64_t i = 0; i < r.numel(); ++i) r[i] -= ax[i];
    }
    CTensor p = r;
    double rr = dot_real(r, r);
    for (int it = 0; it < niter; ++it) {
        if (rr <= 0.0) break;  // exact solution reached
        CTensor ap = apply_a(p);
        const double pap = dot_real(p, ap);
        UFMRI_CHECK(std::isfinite(pap) && std::isfinite(rr), "cg_solve: non-finite intermediate");
        if (pap <= 0.0) break;  // numerically null direction (possible when lam = 0)
        const double alpha = rr / pap;
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rr_new = dot_real(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::int64_t i = 0; i < p.numel(); ++i) p[i] = r[i] + beta * p[i];
    }
    UFMRI_CHECK(x.all_finite(), "cg_solve: non-finite result");
    return x;
}

KSpaceSample make_sample(const Slice& target, const CoilMaps& maps, const SamplingMask& mask) {
    KSpaceSample s;
    s.y = e_forward(target.image, maps, mask);
    s.maps = maps;
    s.mask = mask;
    s.target = target;
    return s;
}

void save_mask(const SamplingMask& m, const std::string& path,
               const std::map<std::string, std::string>& meta) {
    NamedArrays na;
    na.put_u8("mask", {m.h, m.w}, m.mask.data());
    na.meta = meta;
    na.meta["acceleration"] = std::to_string(m.acceleration);
    na.meta["calib_h"] = std::to_string(m.calib_h);
    na.meta["calib_w"] = std::to_string(m.calib_w);
    na.meta["center_fraction"] = std::to_string(m.center_fraction);
    na.meta["min_radius"] = std::to_string(m.min_radius);
    na.save(path);
}

SamplingMask load_mask(const std::string& path) {
    NamedArrays na = NamedArrays::load(path);
    std::vector<int> shape;
    SamplingMask m;
    m.mask = na.get_u8("mask", &shape);
    UFMRI_CHECK(shape.size() == 2, "mask array must be [H, W]");
    m.h = shape[0];
    m.w = shape[1];
    auto getd = [&](const char* k, double dflt) {
        auto it = na.meta.find(k);
        return it == na.meta.end() ? dflt : std::stod(it->second);
    };
    m.acceleration = getd("acceleration", 1.0);
    m.calib_h = static_cast<int>(getd("calib_h", 0));
    m.calib_w = static_cast<int>(getd("calib_w", 0));
    m.center_fraction = getd("center_fraction", 0.0);
    m.min_radius = getd("min_radius", 0.0);
    return m;
}

} // namespace ufmri
