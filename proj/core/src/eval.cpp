#include "ufmri/eval.hpp"

#include <algorithm>
#include <cmath>

#include "ufmri/fft.hpp"
#include "ufmri/rng.hpp"

namespace ufmri {

CTensor perturb_noise(const CTensor& x, double beta, std::uint64_t seed) {
    UFMRI_CHECK(beta >= 0.0 && beta <= 0.1 + 1e-12, "perturb_noise: beta must lie in [0, 0.1]");
    if (beta == 0.0) return x;
    Rng rng(seed);
    CTensor out = x;
    const double s = 1.0 / std::sqrt(2.0);  // unit total variance per sample
    for (cplx& v : out.v) {
        const cplx n(s * rng.normal(), s * rng.normal());
        v = (1.0 - beta) * v + beta * n;
    }
    return out;
}

CTensor perturb_blur(const CTensor& x, double r) {
    UFMRI_CHECK(r >= 1.0, "perturb_blur: R must be >= 1");
    UFMRI_CHECK(x.ndim() == 2, "perturb_blur: expects [H, W]");
    const int h = x.dim(0), w = x.dim(1);
    auto keep = [&](int n) {
        int k = 2 * static_cast<int>(std::lround(n / (2.0 * r)));
        return std::clamp(k, 2, n);
    };
    const int kh = keep(h), kw = keep(w);
    if (kh == h && kw == w) return x;
    CTensor spec = fft2c(x);
    const int r0 = (h - kh) / 2, c0 = (w - kw) / 2;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (i < r0 || i >= r0 + kh || j < c0 || j >= c0 + kw)
                spec[static_cast<std::int64_t>(i) * w + j] = 0;
    return ifft2c(spec);
}

StudyCurve perturbation_study_noise(const CTensor& x, const std::vector<double>& betas,
                                    const FeatWeights& w, const UflossConfig& cfg,
                                    int noise_seeds, std::uint64_t seed) {
    UFMRI_CHECK(std::is_sorted(betas.begin(), betas.end()), "study levels must be ascending");
    UFMRI_CHECK(!betas.empty() && betas.front() == 0.0, "noise study must include beta = 0");
    StudyCurve c;
    for (double beta : betas) {
        double acc = 0;
        for (int s = 0; s < noise_seeds; ++s) {
            const CTensor xp = perturb_noise(x, beta, derive_seed(seed, static_cast<std::uint64_t>(s)));
            acc += ufloss_value(x, xp, w, cfg, 0, 0);
        }
        c.x.push_back(beta);
        c.y.push_back(acc / noise_seeds);
    }
    return c;
}

StudyCurve perturbation_study_blur(const CTensor& x, const std::vector<double>& rs,
                                   const FeatWeights& w, const UflossConfig& cfg) {
    UFMRI_CHECK(std::is_sorted(rs.begin(), rs.end()), "study levels must be ascending");
    UFMRI_CHECK(!rs.empty() && rs.front() == 1.0, "blur study must include R = 1");
    StudyCurve c;
    for (double r : rs) {
        const CTensor xp = perturb_blur(x, r);
        c.x.push_back(r);
        c.y.push_back(ufloss_value(x, xp, w, cfg, 0, 0));
    }
    return c;
}

namespace {

Tensor ufloss_image_grad(const CTensor& x_o, const CTensor& x_p, const FeatWeights& w,
                         const UflossConfig& cfg, double* loss_out) {
    ad::Var xp = ad::Var::leaf(to_planes(x_p));
    ad::Var loss = ufloss_ad(x_o, xp, w, cfg, 0, 0);
    if (loss_out) *loss_out = loss.item();
    ad::backward(loss);
    return xp.grad();
}

} // namespace

DeblurResult deblur_descent(const CTensor& x_o, double r0, double alpha, int steps,
                            const FeatWeights& w, const UflossConfig& cfg) {
    UFMRI_CHECK(alpha > 0, "deblur_descent: alpha must be > 0");
    DeblurResult res;
    res.alpha = alpha;
    CTensor xp = perturb_blur(x_o, r0);
    double prev_loss = 1e300;
    int rise = 0;
    for (int k = 0; k <= steps; ++k) {
        double loss = 0;
        Tensor g = ufloss_image_grad(x_o, xp, w, cfg, &loss);
        res.curve.x.push_back(k);
        res.curve.y.push_back(loss);
        res.curve.y_nrmse.push_back(nrmse(xp, x_o));
        if (loss > prev_loss) {
            if (++rise >= 10)
                fail("deblur_descent: UFLoss rose for 10 consecutive steps; try a smaller alpha than " +
                     std::to_string(alpha));
        } else {
            rise = 0;
        }
        prev_loss = loss;
        if (k == steps) break;
        CTensor gc = from_planes(g);
        for (std::int64_t i = 0; i < xp.numel(); ++i) xp[i] -= alpha * gc[i];
    }
    res.final_image = std::move(xp);
    return res;
}

double tune_deblur_alpha(const CTensor& x_o, double r0, double alpha0, const FeatWeights& w,
                         const UflossConfig& cfg, int rounds) {
    const CTensor xp0 = perturb_blur(x_o, r0);
    Tensor g = ufloss_image_grad(x_o, xp0, w, cfg, nullptr);
    const CTensor gc = from_planes(g);
    auto loss_after = [&](double a) {
        CTensor xp = xp0;
        for (std::int64_t i = 0; i < xp.numel(); ++i) xp[i] -= a * gc[i];
        return ufloss_value(x_o, xp, w, cfg, 0, 0);
    };
    double alpha = alpha0;
    for (int r = 0; r < rounds; ++r) {
        const double lo = loss_after(alpha / 4), mid = loss_after(alpha), hi = loss_after(alpha * 4);
        if (mid <= lo && mid <= hi) break;
        alpha = lo < hi ? alpha / 4 : alpha * 4;
    }
    return alpha;
}

std::vector<Neighbor> retrieve_neighbors(const Patch& query, const FeatWeights& w,
                                         const MemoryBank& bank, int k) {
    UFMRI_CHECK(bank.size() >= 1, "retrieve_neighbors: empty bank");
    UFMRI_CHECK(k >= 1 && k <= bank.size(), "retrieve_neighbors: k out of range");
    const Tensor f = feature_map(query, w);
    const int n = bank.size(), d = bank.dim();
    std::vector<Neighbor> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += bank.rows[static_cast<std::int64_t>(i) * d + j] * f[j];
        all[static_cast<std::size_t>(i)] = {i, s};
    }
    auto cmp = [](const Neighbor& a, const Neighbor& b) {
        return a.inner != b.inner ? a.inner > b.inner : a.index < b.index;
    };
    std::partial_sort(all.begin(), all.begin() + k, all.end(), cmp);
    all.resize(static_cast<std::size_t>(k));
    return all;
}

HeatMap correlation_map(const Patch& source, const Slice& target, const FeatWeights& w,
                        int stride) {
    const int p = source.size();
    UFMRI_CHECK(p == w.patch_size, "correlation_map: patch size does not match the network");
    const int gh = grid_count_1d(target.height(), p, stride, 0);
    const int gw = grid_count_1d(target.width(), p, stride, 0);
    UFMRI_CHECK(gh >= 1 && gw >= 1, "correlation_map: target smaller than the patch");
    const Tensor f_src = feature_map(source, w);
    const Tensor f_grid = grid_patch_features(target.image, w, stride, 0, 0);
    const int d = w.arch.feat_dim;
    HeatMap hm;
    hm.stride = stride;
    hm.patch_size = p;
    hm.values = Tensor::zeros({gh, gw});
    for (int m = 0; m < gh * gw; ++m) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += f_grid[static_cast<std::int64_t>(m) * d + j] * f_src[j];
        hm.values[m] = s;
    }
    return hm;
}

HeatMap ssim_correlation_map(const Patch& source, const Slice& target, int stride) {
    const int p = source.size();
    const int gh = grid_count_1d(target.height(), p, stride, 0);
    const int gw = grid_count_1d(target.width(), p, stride, 0);
    UFMRI_CHECK(gh >= 1 && gw >= 1, "ssim_correlation_map: target smaller than the patch");
    Tensor src_mag = Tensor::zeros({p, p});
    double ref_max = 0;
    for (std::int64_t i = 0; i < src_mag.numel(); ++i) {
        src_mag[i] = std::abs(source.pixels[i]);
        ref_max = std::max(ref_max, src_mag[i]);
    }
    HeatMap hm;
    hm.stride = stride;
    hm.patch_size = p;
    hm.values = Tensor::zeros({gh, gw});
    const int tw = target.width();
    for (int gi = 0; gi < gh; ++gi)
        for (int gj = 0; gj < gw; ++gj) {
            Tensor cand = Tensor::zeros({p, p});
            for (int r = 0; r < p; ++r)
                for (int c = 0; c < p; ++c)
                    cand[static_cast<std::int64_t>(r) * p + c] = std::abs(
                        target.image[static_cast<std::int64_t>(gi * stride + r) * tw + gj * stride + c]);
            hm.values[static_cast<std::int64_t>(gi) * gw + gj] = ssim_real(src_mag, cand, ref_max);
        }
    return hm;
}

} // namespace ufmri
