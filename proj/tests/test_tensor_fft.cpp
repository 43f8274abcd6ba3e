#include <doctest.h>

#include <ufmri/fft.hpp>
#include <ufmri/rng.hpp>
#include <ufmri/tensor.hpp>

using namespace ufmri;

namespace {

CTensor random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    CTensor x = CTensor::zeros({h, w});
    for (cplx& v : x.v) v = cplx(rng.normal(), rng.normal());
    return x;
}

} // namespace

TEST_CASE("plane conversion round trip") {
    CTensor x = random_image(5, 7, 1);
    CTensor back = from_planes(to_planes(x));
    REQUIRE(back.same_shape(x));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("fft2c of a constant image concentrates at the center bin") {
    CTensor x({8, 8}, std::vector<cplx>(64, cplx(1, 0)));
    CTensor k = fft2c(x);
    // orthonormal scaling: DC = value * sqrt(H*W) = 8
    CHECK(std::abs(k[4 * 8 + 4] - cplx(8, 0)) < 1e-12);
    double off = 0;
    for (int i = 0; i < 64; ++i)
        if (i != 4 * 8 + 4) off += std::abs(k[i]);
    CHECK(off < 1e-10);
}

TEST_CASE("fft2c round trip and Parseval") {
    CTensor x = random_image(32, 32, 42);
    CTensor k = fft2c(x);
    CTensor back = ifft2c(k);
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        num += std::norm(back[i] - x[i]);
        den += std::norm(x[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-6);
    CHECK(norm2(k) == doctest::Approx(norm2(x)).epsilon(1e-6));
}

TEST_CASE("fft2c handles odd sizes and stacked leading dims") {
    CTensor x = random_image(9, 15, 3);
    CTensor back = ifft2c(fft2c(x));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-10);

    Rng rng(5);
    CTensor stack = CTensor::zeros({3, 8, 8});
    for (cplx& v : stack.v) v = cplx(rng.normal(), rng.normal());
    CTensor ks = fft2c(stack);
    // each plane transformed independently
    for (int c = 0; c < 3; ++c) {
        CTensor one = CTensor::zeros({8, 8});
        std::copy(stack.v.begin() + c * 64, stack.v.begin() + (c + 1) * 64, one.v.begin());
        CTensor k1 = fft2c(one);
        for (int i = 0; i < 64; ++i) CHECK(std::abs(k1[i] - ks[c * 64 + i]) < 1e-12);
    }
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(7, 0) != derive_seed(7, 1));
    CHECK(derive_seed(7, 0) != derive_seed(8, 0));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}
