#include <benchmark/benchmark.h>

#include <ufmri/encode.hpp>
#include <ufmri/fft.hpp>
#include <ufmri/rng.hpp>

using namespace ufmri;

namespace {

CTensor random_image(int n, std::uint64_t seed) {
    Rng rng(seed);
    CTensor x = CTensor::zeros({n, n});
    for (cplx& v : x.v) v = cplx(rng.normal(), rng.normal());
    return x;
}

} // namespace

static void BM_fft2c(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    CTensor x = random_image(n, 1);
    for (auto _ : state) {
        CTensor k = fft2c(x);
        benchmark::DoNotOptimize(k.v.data());
    }
}
BENCHMARK(BM_fft2c)->Arg(64)->Arg(256);

static void BM_e_forward_adjoint(benchmark::State& state) {
    const int n = 64, coils = static_cast<int>(state.range(0));
    CoilMaps maps = synth_coil_maps(n, n, coils, 2);
    SamplingMask mask = make_mask_1d_random(n, n, 4.0, 0.08, 3);
    CTensor x = random_image(n, 4);
    for (auto _ : state) {
        CTensor out = e_adjoint(e_forward(x, maps, mask), maps, mask);
        benchmark::DoNotOptimize(out.v.data());
    }
}
BENCHMARK(BM_e_forward_adjoint)->Arg(1)->Arg(4)->Arg(8);

static void BM_cg_solve(benchmark::State& state) {
    const int n = 64;
    CoilMaps maps = synth_coil_maps(n, n, 4, 5);
    SamplingMask mask = make_mask_1d_random(n, n, 4.0, 0.08, 6);
    CTensor rhs = e_adjoint(e_forward(random_image(n, 7), maps, mask), maps, mask);
    const int iters = static_cast<int>(state.range(0));
    for (auto _ : state) {
        CTensor x = cg_solve(rhs, maps, mask, 0.05, iters, CTensor::zeros({n, n}));
        benchmark::DoNotOptimize(x.v.data());
    }
}
BENCHMARK(BM_cg_solve)->Arg(6)->Arg(50);

static void BM_poisson_mask(benchmark::State& state) {
    for (auto _ : state) {
        SamplingMask m = make_mask_poisson(256, 256, 8.0, 24, 11);
        benchmark::DoNotOptimize(m.mask.data());
    }
}
BENCHMARK(BM_poisson_mask)->Unit(benchmark::kMillisecond);
