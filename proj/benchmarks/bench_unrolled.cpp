#include <benchmark/benchmark.h>

#include <ufmri/data.hpp>
#include <ufmri/unrolled.hpp>

using namespace ufmri;

namespace {

struct Fixture {
    KSpaceSample sample;
    ReconWeights weights = ReconWeights::init(unet_arch_desk(), 0.05, 1);
    UnrollConfig cfg;
    ad::MapsPtr maps_p;
    ad::MaskPtr mask_p;

    Fixture() {
        Dataset d = make_phantom_dataset(1, 64, 64, 2);
        CoilMaps maps = synth_coil_maps(64, 64, 4, 3);
        SamplingMask mask = make_mask_1d_random(64, 64, 4.0, 0.08, 4);
        sample = make_sample(d.slices[0], maps, mask);
        maps_p = std::make_shared<const CoilMaps>(sample.maps);
        mask_p = std::make_shared<const SamplingMask>(sample.mask);
    }
};

} // namespace

static void BM_modl_forward_desk(benchmark::State& state) {
    Fixture f;
    for (auto _ : state) {
        CTensor x = modl_forward(f.sample.y, f.sample.maps, f.sample.mask, f.weights, f.cfg);
        benchmark::DoNotOptimize(x.v.data());
    }
}
BENCHMARK(BM_modl_forward_desk)->Unit(benchmark::kMillisecond);

static void BM_modl_train_step_l2(benchmark::State& state) {
    Fixture f;
    const Tensor target = to_planes(f.sample.target.image);
    for (auto _ : state) {
        ParamVars vars(f.weights.params, true);
        ad::Var xhat = modl_forward_ad(f.sample.y, f.maps_p, f.mask_p, f.weights.arch, vars, f.cfg);
        ad::Var loss = ad::sum_sq_diff(xhat, target);
        ad::backward(loss);
        benchmark::DoNotOptimize(vars.collect_grads().data());
    }
}
BENCHMARK(BM_modl_train_step_l2)->Unit(benchmark::kMillisecond);

static void BM_modl_train_step_ufloss(benchmark::State& state) {
    Fixture f;
    FeatWeights fw = FeatWeights::init(featnet_arch_desk(), 40, 7);
    UflossConfig uf{40, 5, 1.5};
    for (auto _ : state) {
        ParamVars vars(f.weights.params, true);
        ad::Var xhat = modl_forward_ad(f.sample.y, f.maps_p, f.mask_p, f.weights.arch, vars, f.cfg);
        ReconLossVar lv = recon_loss_ad(f.sample.target.image, xhat, &fw, uf, 11);
        ad::backward(lv.total);
        benchmark::DoNotOptimize(vars.collect_grads().data());
    }
}
BENCHMARK(BM_modl_train_step_ufloss)->Unit(benchmark::kMillisecond);
