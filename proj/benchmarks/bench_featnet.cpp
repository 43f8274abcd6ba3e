#include <benchmark/benchmark.h>

#include <ufmri/featnet.hpp>
#include <ufmri/rng.hpp>

using namespace ufmri;

static void BM_featnet_infer_desk(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    FeatWeights w = FeatWeights::init(featnet_arch_desk(), 40, 1);
    Rng rng(2);
    Tensor x = Tensor::zeros({batch, 2, 40, 40});
    rng.fill_normal(x);
    for (auto _ : state) {
        Tensor f = featnet_infer(w, x);
        benchmark::DoNotOptimize(f.v.data());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_featnet_infer_desk)->Arg(1)->Arg(16)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_contrastive_step_desk(benchmark::State& state) {
    const int bank_n = static_cast<int>(state.range(0));
    FeatWeights w = FeatWeights::init(featnet_arch_desk(), 40, 3);
    MemoryBank bank = MemoryBank::random_init(bank_n, w.arch.feat_dim, 4);
    Rng rng(5);
    ContrastiveBatch batch;
    batch.patches = Tensor::zeros({16, 2, 40, 40});
    rng.fill_normal(batch.patches);
    for (int i = 0; i < 16; ++i) batch.indices.push_back(i * 7 % bank_n);
    Adam opt;
    for (auto _ : state) {
        ParamVars vars(w.params, true);
        ContrastiveLoss cl = contrastive_loss(w, vars, bank, batch, 0.2);
        ad::backward(cl.loss);
        opt.step(w.params, vars.collect_grads());
        update_bank(bank, batch.indices, cl.features, 0.0);
    }
}
BENCHMARK(BM_contrastive_step_desk)->Arg(4000)->Arg(40000)->Unit(benchmark::kMillisecond);
