#include "ufmri/metrics.hpp"

#include <cmath>
#include <vector>

namespace ufmri {

double nrmse(const CTensor& xhat, const CTensor& x) {
    UFMRI_CHECK(xhat.same_shape(x), "nrmse: shape mismatch");
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        num += std::norm(xhat[i] - x[i]);
        den += std::norm(x[i]);
    }
    UFMRI_CHECK(den > 0, "nrmse: all-zero reference");
    return std::sqrt(num / den);
}

namespace {

constexpr int kWin = 7;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01, kK2 = 0.03;

const std::vector<double>& gaussian_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kWin * kWin);
        double sum = 0;
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
                const double dy = i - kWin / 2, dx = j - kWin / 2;
                v[static_cast<std::size_t>(i * kWin + j)] =
                    std::exp(-(dy * dy + dx * dx) / (2 * kSigma * kSigma));
                sum += v[static_cast<std::size_t>(i * kWin + j)];
            }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

} // namespace

double ssim_real(const Tensor& a, const Tensor& b, double dynamic_range) {
    UFMRI_CHECK(a.same_shape(b) && a.ndim() == 2, "ssim: expects equal 2D images");
    const int h = a.dim(0), w = a.dim(1);
    UFMRI_CHECK(h >= kWin && w >= kWin, "ssim: image smaller than the 7x7 window");
    const double L = dynamic_range > 0 ? dynamic_range : 1e-300;
    const double c1 = (kK1 * L) * (kK1 * L);
    const double c2 = (kK2 * L) * (kK2 * L);
    const auto& win = gaussian_window();
    double acc = 0;
    std::int64_t count = 0;
    for (int i = 0; i + kWin <= h; ++i) {
        for (int j = 0; j + kWin <= w; ++j) {
            double ma = 0, mb = 0;
            for (int u = 0; u < kWin; ++u)
                for (int v = 0; v < kWin; ++v) {
                    const double wgt = win[static_cast<std::size_t>(u * kWin + v)];
                    ma += wgt * a[static_cast<std::int64_t>(i + u) * w + (j + v)];
                    mb += wgt * b[static_cast<std::int64_t>(i + u) * w + (j + v)];
                }
            double va = 0, vb = 0, cov = 0;
            for (int u = 0; u < kWin; ++u)
                for (int v = 0; v < kWin; ++v) {
                    const double wgt = win[static_cast<std::size_t>(u * kWin + v)];
                    const double da = a[static_cast<std::int64_t>(i + u) * w + (j + v)] - ma;
                    const double db = b[static_cast<std::int64_t>(i + u) * w + (j + v)] - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cov += wgt * da * db;
                }
            const double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                             ((ma * ma + mb * mb + c1) * (va + vb + c2));
            acc += s;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

double ssim(const CTensor& xhat, const CTensor& x) {
    UFMRI_CHECK(xhat.same_shape(x) && x.ndim() == 2, "ssim: expects equal 2D images");
    Tensor a = Tensor::zeros(x.shape), b = Tensor::zeros(x.shape);
    double ref_max = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        a[i] = std::abs(xhat[i]);
        b[i] = std::abs(x[i]);
        ref_max = std::max(ref_max, b[i]);
    }
    return ssim_real(a, b, ref_max);
}

} // namespace ufmri
