#include "ufmri/unrolled.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ufmri/container.hpp"
#include "ufmri/metrics.hpp"
#include "ufmri/rng.hpp"

namespace ufmri {

using json = nlohmann::json;

namespace {

double softplus_inv(double y) {
    UFMRI_CHECK(y > 0, "lam_init must be > 0");
    return std::log(std::expm1(y));
}

} // namespace

double ReconWeights::lam() const {
    const double raw = params.at("lam_raw")[0];
    return raw > 30.0 ? raw : std::log1p(std::exp(raw));
}

ReconWeights ReconWeights::init(const UNetArch& arch, double lam_init, std::uint64_t seed) {
    ReconWeights w;
    w.arch = arch;
    w.params = unet_init(arch, seed);
    w.params.add("lam_raw", Tensor::scalar(softplus_inv(lam_init)));
    return w;
}

namespace {

ad::Var apply_denoiser(const UNetArch& arch, const ParamVars& vars, ad::Var x) {
    using namespace ad;
    const int h = x.val().dim(1), w = x.val().dim(2);
    Var batched = reshape(x, {1, 2, h, w});
    Var out = unet_apply(arch, vars, batched);
    UFMRI_CHECK(out.val().all_finite(), "denoiser produced non-finite output");
    return reshape(out, {2, h, w});
}

} // namespace

CTensor denoise(const CTensor& x, const ReconWeights& w) {
    UFMRI_CHECK(x.all_finite(), "denoise: non-finite input");
    ParamVars vars(w.params, /*trainable=*/false);
    ad::Var out = apply_denoiser(w.arch, vars, ad::Var::constant(to_planes(x)));
    return from_planes(out.val());
}

ad::Var modl_forward_ad(const CTensor& y, ad::MapsPtr maps, ad::MaskPtr mask,
                        const UNetArch& arch, const ParamVars& vars, const UnrollConfig& cfg) {
    using namespace ad;
    const Tensor zero_filled = to_planes(e_adjoint(y, *maps, *mask));
    Var ehy = Var::constant(zero_filled);
    Var x = ehy;
    if (cfg.unrolls == 0) return x;
    Var lam = softplus(vars.get("lam_raw"));
    for (int k = 0; k < cfg.unrolls; ++k) {
        Var z = apply_denoiser(arch, vars, x);
        Var rhs = scale_add(ehy, z, lam);
        x = cg_solve_op(rhs, maps, mask, lam, cfg.cg_steps, x);
    }
    return x;
}

CTensor modl_forward(const CTensor& y, const CoilMaps& maps, const SamplingMask& mask,
                     const ReconWeights& w, const UnrollConfig& cfg) {
    ParamVars vars(w.params, /*trainable=*/false);
    auto maps_p = std::make_shared<const CoilMaps>(maps);
    auto mask_p = std::make_shared<const SamplingMask>(mask);
    ad::Var out = modl_forward_ad(y, maps_p, mask_p, w.arch, vars, cfg);
    return from_planes(out.val());
}

std::vector<KSpaceSample> build_samples(const Dataset& ds, const SampleSpec& spec,
                                        std::uint64_t seed) {
    std::vector<KSpaceSample> out;
    out.reserve(ds.slices.size());
    for (std::size_t i = 0; i < ds.slices.size(); ++i) {
        const Slice& sl = ds.slices[i];
        const int h = sl.height(), w = sl.width();
        SamplingMask mask;
        const std::uint64_t mask_seed = derive_seed(seed, 2 * i);
        if (spec.mask_type == "poisson")
            mask = make_mask_poisson(h, w, spec.accel, spec.calib, mask_seed);
        else if (spec.mask_type == "random1d")
            mask = make_mask_1d_random(h, w, spec.accel, spec.center_fraction, mask_seed);
        else
            fail("build_samples: unknown mask type \"" + spec.mask_type + "\"");
        CoilMaps maps = synth_coil_maps(h, w, spec.coils, derive_seed(seed, 2 * i + 1));
        out.push_back(make_sample(sl, maps, mask));
    }
    return out;
}

namespace {

ValMetrics validate(const std::vector<KSpaceSample>& val, const ReconWeights& w,
                    const UnrollConfig& cfg, const FeatWeights* feat_w,
                    const UflossConfig& ufloss_cfg) {
    ValMetrics m;
    if (val.empty()) return m;
    for (const KSpaceSample& s : val) {
        const CTensor xhat = modl_forward(s.y, s.maps, s.mask, w, cfg);
        m.nrmse += nrmse(xhat, s.target.image);
        m.ssim += ssim(xhat, s.target.image);
        if (feat_w) m.ufloss += ufloss_value(s.target.image, xhat, *feat_w, ufloss_cfg, 0, 0);
    }
    const double n = static_cast<double>(val.size());
    m.nrmse /= n;
    m.ssim /= n;
    m.ufloss /= n;
    return m;
}

} // namespace

TrainModlResult train_modl(const std::vector<KSpaceSample>& train,
                           const std::vector<KSpaceSample>& val, const FeatWeights* feat_w,
                           const UNetArch& arch, const UnrollConfig& cfg,
                           const UflossConfig& ufloss_cfg, std::uint64_t seed,
                           const std::function<void(int, const ReconLossParts&)>& step_hook,
                           const std::function<void(int, const ValMetrics&)>& epoch_hook,
                           const std::string& abort_checkpoint_path) {
    UFMRI_CHECK(!train.empty(), "train_modl: empty training set");
    UflossConfig uf = ufloss_cfg;
    if (feat_w == nullptr) uf.mu = 0.0;

    TrainModlResult res;
    res.last = ReconWeights::init(arch, 0.05, derive_seed(seed, 11));
    Adam opt;
    opt.lr = cfg.lr;

    // shared immutable per-sample encode contexts for the graphs
    std::vector<ad::MapsPtr> maps_ptrs;
    std::vector<ad::MaskPtr> mask_ptrs;
    for (const KSpaceSample& s : train) {
        maps_ptrs.push_back(std::make_shared<const CoilMaps>(s.maps));
        mask_ptrs.push_back(std::make_shared<const SamplingMask>(s.mask));
    }

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(seed, 12));
    double best_nrmse = 1e300;
    int step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            std::vector<Tensor> grad_accum;
            ReconLossParts mean_parts;
            const std::uint64_t step_seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(step));
            for (std::size_t bi = start; bi < end; ++bi) {
                const int si = order[bi];
                const KSpaceSample& s = train[static_cast<std::size_t>(si)];
                ParamVars vars(res.last.params, /*trainable=*/true);
                ad::Var xhat = modl_forward_ad(s.y, maps_ptrs[static_cast<std::size_t>(si)],
                                               mask_ptrs[static_cast<std::size_t>(si)], arch, vars, cfg);
                ReconLossVar lv = recon_loss_ad(s.target.image, xhat, feat_w, uf, step_seed);
                if (!std::isfinite(lv.parts.total)) {
                    if (!abort_checkpoint_path.empty())
                        save_recon(abort_checkpoint_path, res.last,
                                   {{"aborted_epoch", std::to_string(epoch)}});
                    fail("train_modl: non-finite loss at epoch " + std::to_string(epoch));
                }
                ad::backward(lv.total);
                std::vector<Tensor> g = vars.collect_grads();
                const double inv = 1.0 / static_cast<double>(end - start);
                if (grad_accum.empty()) {
                    grad_accum = std::move(g);
                    for (Tensor& t : grad_accum)
                        for (double& x : t.v) x *= inv;
                } else {
                    for (std::size_t p = 0; p < g.size(); ++p)
                        for (std::int64_t k = 0; k < g[p].numel(); ++k)
                            grad_accum[p][k] += inv * g[p][k];
                }
                mean_parts.total += inv * lv.parts.total;
                mean_parts.mse += inv * lv.parts.mse;
                mean_parts.ufloss += inv * lv.parts.ufloss;
            }
            opt.step(res.last.params, grad_accum);
            if (step_hook) step_hook(step, mean_parts);
            ++step;
        }
        const ValMetrics vm = validate(val, res.last, cfg, feat_w, uf);
        res.val_log.push_back(vm);
        if (epoch_hook) epoch_hook(epoch, vm);
        if (val.empty() || vm.nrmse < best_nrmse) {
            best_nrmse = vm.nrmse;
            res.best = res.last;
            res.best_epoch = epoch;
        }
    }
    if (res.best_epoch < 0) res.best = res.last;
    return res;
}

void save_recon(const std::string& path, const ReconWeights& w,
                const std::map<std::string, std::string>& meta) {
    NamedArrays na;
    for (const auto& item : w.params.items) na.put_tensor("weights/" + item.name, item.value);
    const double lam_value = w.lam();
    na.put_f8("lam", {1}, &lam_value);
    json cfg;
    cfg["arch"] = json::parse(w.arch.to_json());
    na.put_str("config", {cfg.dump()});
    na.meta = meta;
    na.save(path);
}

ReconWeights load_recon(const std::string& path) {
    NamedArrays na = NamedArrays::load(path);
    json cfg = json::parse(na.get_str("config").at(0));
    ReconWeights w;
    w.arch = UNetArch::from_json(cfg.at("arch").dump());
    w.params = unet_init(w.arch, 0);
    w.params.add("lam_raw", Tensor::scalar(0.0));
    for (auto& item : w.params.items) {
        Tensor stored = na.get_tensor("weights/" + item.name);
        UFMRI_CHECK(stored.same_shape(item.value), "recon checkpoint: shape mismatch for " + item.name);
        item.value = std::move(stored);
    }
    return w;
}

} // namespace ufmri
