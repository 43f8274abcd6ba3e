#include "ufmri/wavelet.hpp"

#include <cmath>
#include <vector>

namespace ufmri {
namespace {

// Daubechies-4 analysis filters.
struct D4 {
    double h[4], g[4];
    D4() {
        const double s3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
        h[0] = (1 + s3) / d;
        h[1] = (3 + s3) / d;
        h[2] = (3 - s3) / d;
        h[3] = (1 - s3) / d;
        for (int k = 0; k < 4; ++k) g[k] = (k % 2 ? -1.0 : 1.0) * h[3 - k];
    }
};
const D4 kD4;

void analyze_1d(cplx* x, int n, int stride) {
    std::vector<cplx> tmp(static_cast<std::size_t>(n));
    const int half = n / 2;
    for (int k = 0; k < half; ++k) {
        cplx a(0, 0), d(0, 0);
        for (int m = 0; m < 4; ++m) {
            const cplx v = x[static_cast<std::ptrdiff_t>(((2 * k + m) % n)) * stride];
            a += kD4.h[m] * v;
            d += kD4.g[m] * v;
        }
        tmp[static_cast<std::size_t>(k)] = a;
        tmp[static_cast<std::size_t>(half + k)] = d;
    }
    for (int i = 0; i < n; ++i) x[static_cast<std::ptrdiff_t>(i) * stride] = tmp[static_cast<std::size_t>(i)];
}

void synthesize_1d(cplx* x, int n, int stride) {
    std::vector<cplx> tmp(static_cast<std::size_t>(n), cplx(0, 0));
    const int half = n / 2;
    for (int k = 0; k < half; ++k) {
        const cplx a = x[static_cast<std::ptrdiff_t>(k) * stride];
        const cplx d = x[static_cast<std::ptrdiff_t>(half + k) * stride];
        for (int m = 0; m < 4; ++m)
            tmp[static_cast<std::size_t>((2 * k + m) % n)] += kD4.h[m] * a + kD4.g[m] * d;
    }
    for (int i = 0; i < n; ++i) x[static_cast<std::ptrdiff_t>(i) * stride] = tmp[static_cast<std::size_t>(i)];
}

void check_dims(const CTensor& x, int levels) {
    UFMRI_CHECK(x.ndim() == 2, "wavelet transform expects a 2D array");
    UFMRI_CHECK(levels >= 1, "wavelet levels must be >= 1");
    const int div = 1 << levels;
    UFMRI_CHECK(x.dim(0) % div == 0 && x.dim(1) % div == 0,
                "wavelet: dims must be divisible by 2^levels");
}

} // namespace

CTensor dwt2(const CTensor& x, int levels) {
    check_dims(x, levels);
    CTensor c = x;
    const int w = x.dim(1);
    int ch = x.dim(0), cw = x.dim(1);
    for (int l = 0; l < levels; ++l) {
        for (int r = 0; r < ch; ++r) analyze_1d(c.v.data() + static_cast<std::ptrdiff_t>(r) * w, cw, 1);
        for (int col = 0; col < cw; ++col) analyze_1d(c.v.data() + col, ch, w);
        ch /= 2;
        cw /= 2;
    }
    return c;
}

CTensor idwt2(const CTensor& c, int levels) {
    check_dims(c, levels);
    CTensor x = c;
    const int w = c.dim(1);
    for (int l = levels - 1; l >= 0; --l) {
        const int ch = c.dim(0) >> l, cw = c.dim(1) >> l;
        for (int col = 0; col < cw; ++col) synthesize_1d(x.v.data() + col, ch, w);
        for (int r = 0; r < ch; ++r) synthesize_1d(x.v.data() + static_cast<std::ptrdiff_t>(r) * w, cw, 1);
    }
    return x;
}

void soft_threshold(CTensor& coeffs, double t) {
    UFMRI_CHECK(t >= 0, "soft_threshold: threshold must be >= 0");
    for (cplx& c : coeffs.v) {
        const double mag = std::abs(c);
        c = mag > t ? c * ((mag - t) / mag) : cplx(0, 0);
    }
}

} // namespace ufmri
