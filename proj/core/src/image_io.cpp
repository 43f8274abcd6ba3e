#include "ufmri/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ufmri {
namespace {

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& rgb, int h, int w) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    UFMRI_CHECK(fp != nullptr, "cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail("libpng write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < h; ++r)
        png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(r) * w * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void auto_range(const Tensor& img, double& lo, double& hi) {
    if (lo < hi) return;
    lo = 1e300;
    hi = -1e300;
    for (double v : img.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1;
}

std::uint8_t level(double v, double lo, double hi) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(255.0 * t));
}

} // namespace

Tensor magnitude_image(const CTensor& x) {
    Tensor m = Tensor::zeros(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) m[i] = std::abs(x[i]);
    return m;
}

void write_png_gray(const std::string& path, const Tensor& img, double lo, double hi) {
    UFMRI_CHECK(img.ndim() == 2, "write_png_gray expects [H, W]");
    auto_range(img, lo, hi);
    const int h = img.dim(0), w = img.dim(1);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        const std::uint8_t g = level(img[i], lo, hi);
        rgb[static_cast<std::size_t>(3 * i)] = g;
        rgb[static_cast<std::size_t>(3 * i + 1)] = g;
        rgb[static_cast<std::size_t>(3 * i + 2)] = g;
    }
    write_png_rgb8(path, rgb, h, w);
}

void write_png_colormap(const std::string& path, const Tensor& img, double lo, double hi) {
    UFMRI_CHECK(img.ndim() == 2, "write_png_colormap expects [H, W]");
    auto_range(img, lo, hi);
    const int h = img.dim(0), w = img.dim(1);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        const double t = std::clamp((img[i] - lo) / (hi - lo), 0.0, 1.0);
        // dark blue -> teal -> green -> yellow
        const double r = std::clamp(2.0 * t - 1.0, 0.0, 1.0);
        const double g = std::clamp(1.6 * t, 0.0, 1.0);
        const double b = std::clamp(1.0 - 1.6 * t, 0.05, 1.0) * (1.0 - 0.6 * t);
        rgb[static_cast<std::size_t>(3 * i)] = static_cast<std::uint8_t>(std::lround(255 * r));
        rgb[static_cast<std::size_t>(3 * i + 1)] = static_cast<std::uint8_t>(std::lround(255 * g));
        rgb[static_cast<std::size_t>(3 * i + 2)] = static_cast<std::uint8_t>(std::lround(255 * b));
    }
    write_png_rgb8(path, rgb, h, w);
}

void write_curve_png(const std::string& path, const std::vector<double>& xs,
                     const std::vector<double>& ys, int width, int height) {
    UFMRI_CHECK(xs.size() == ys.size() && xs.size() >= 2, "write_curve_png: need >= 2 points");
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 255);
    auto put = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || x >= width || y < 0 || y >= height) return;
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    };
    const int m = 40;  // margin
    // axes
    for (int x = m; x < width - m / 2; ++x) put(x, height - m, 0, 0, 0);
    for (int y = m / 2; y <= height - m; ++y) put(m, y, 0, 0, 0);
    double x0 = xs.front(), x1 = xs.back();
    double ylo = 1e300, yhi = -1e300;
    for (double v : ys) {
        ylo = std::min(ylo, v);
        yhi = std::max(yhi, v);
    }
    if (yhi <= ylo) yhi = ylo + 1;
    if (x1 <= x0) x1 = x0 + 1;
    auto px = [&](double x) { return m + static_cast<int>((x - x0) / (x1 - x0) * (width - 1.5 * m)); };
    auto py = [&](double y) {
        return height - m - static_cast<int>((y - ylo) / (yhi - ylo) * (height - 1.5 * m));
    };
    for (std::size_t i = 1; i < xs.size(); ++i) {
        int ax = px(xs[i - 1]), ay = py(ys[i - 1]);
        int bx = px(xs[i]), by = py(ys[i]);
        const int n = std::max(std::abs(bx - ax), std::abs(by - ay)) + 1;
        for (int k = 0; k <= n; ++k) {
            const double t = static_cast<double>(k) / n;
            put(static_cast<int>(ax + t * (bx - ax)), static_cast<int>(ay + t * (by - ay)), 180, 40, 30);
        }
    }
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) put(px(xs[i]) + dx, py(ys[i]) + dy, 180, 40, 30);
    write_png_rgb8(path, rgb, height, width);
}

} // namespace ufmri
