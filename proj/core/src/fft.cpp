#include "ufmri/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

namespace ufmri {
namespace {

std::mutex g_plan_mutex;

fftw_plan get_plan(int h, int w, int sign) {
    static std::map<std::tuple<int, int, int>, fftw_plan> cache;
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto key = std::make_tuple(h, w, sign);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::vector<cplx> in(static_cast<std::size_t>(h) * w), out(in.size());
    // FFTW_UNALIGNED so the plan can be re-executed on any buffer.
    fftw_plan p = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(in.data()),
                                   reinterpret_cast<fftw_complex*>(out.data()), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    UFMRI_CHECK(p != nullptr, "fftw plan creation failed");
    cache.emplace(key, p);
    return p;
}

// out[i] = in[(i + off) % n] applied along both axes.
void shifted_copy(const cplx* in, cplx* out, int h, int w, int off_h, int off_w, double scale) {
    for (int r = 0; r < h; ++r) {
        const cplx* src_row = in + static_cast<std::size_t>((r + off_h) % h) * w;
        cplx* dst_row = out + static_cast<std::size_t>(r) * w;
        for (int c = 0; c < w; ++c) dst_row[c] = scale * src_row[(c + off_w) % w];
    }
}

CTensor transform(const CTensor& x, int sign) {
    UFMRI_CHECK(x.ndim() >= 2, "fft2c expects >= 2 dims, got " + shape_str(x.shape));
    UFMRI_CHECK(x.all_finite(), "fft2c: non-finite input");
    const int h = x.dim(x.ndim() - 2);
    const int w = x.dim(x.ndim() - 1);
    const std::int64_t planes = x.numel() / (static_cast<std::int64_t>(h) * w);
    CTensor out = CTensor::zeros(x.shape);
    std::vector<cplx> buf_in(static_cast<std::size_t>(h) * w), buf_out(buf_in.size());
    fftw_plan plan = get_plan(h, w, sign);
    const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
    // ifftshift moves the center to index 0; fftshift moves it back.
    const int pre_h = h / 2, pre_w = w / 2;          // ifftshift offset
    const int post_h = (h + 1) / 2, post_w = (w + 1) / 2; // fftshift offset
    for (std::int64_t p = 0; p < planes; ++p) {
        const cplx* src = x.v.data() + p * h * w;
        shifted_copy(src, buf_in.data(), h, w, pre_h, pre_w, 1.0);
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(buf_in.data()),
                         reinterpret_cast<fftw_complex*>(buf_out.data()));
        shifted_copy(buf_out.data(), out.v.data() + p * h * w, h, w, post_h, post_w, scale);
    }
    return out;
}

} // namespace

CTensor fft2c(const CTensor& x) { return transform(x, FFTW_FORWARD); }
CTensor ifft2c(const CTensor& x) { return transform(x, FFTW_BACKWARD); }

} // namespace ufmri
