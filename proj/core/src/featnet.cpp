#include "ufmri/featnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ufmri/container.hpp"
#include "ufmri/rng.hpp"

namespace ufmri {

using json = nlohmann::json;

FeatWeights FeatWeights::init(const FeatNetArch& arch, int patch_size, std::uint64_t seed) {
    FeatWeights w;
    w.arch = arch;
    w.params = featnet_init(arch, seed);
    w.patch_size = patch_size;
    return w;
}

MemoryBank MemoryBank::random_init(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    MemoryBank b;
    b.rows = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < d; ++j) {
            const double v = rng.normal();
            b.rows[static_cast<std::int64_t>(i) * d + j] = v;
            s += v * v;
        }
        const double inv = 1.0 / std::sqrt(s);
        for (int j = 0; j < d; ++j) b.rows[static_cast<std::int64_t>(i) * d + j] *= inv;
    }
    return b;
}

double MemoryBank::max_row_norm_error() const {
    const int n = size(), d = dim();
    double worst = 0;
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < d; ++j) {
            const double v = rows[static_cast<std::int64_t>(i) * d + j];
            s += v * v;
        }
        worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
    }
    return worst;
}

Tensor patch_to_planes(const CTensor& pixels) {
    UFMRI_CHECK(pixels.ndim() == 2, "patch_to_planes expects [P, P]");
    return to_planes(pixels);
}

Tensor featnet_infer(const FeatWeights& w, const Tensor& batch) {
    ParamVars vars(w.params, /*trainable=*/false);
    ad::Var out = featnet_apply(w.arch, vars, ad::Var::constant(batch));
    UFMRI_CHECK(out.val().all_finite(), "featnet: non-finite activations");
    return out.val();
}

Tensor feature_map(const Patch& patch, const FeatWeights& w) {
    UFMRI_CHECK(patch.size() == w.patch_size,
                "feature_map: patch size " + std::to_string(patch.size()) +
                    " does not match the trained input size " + std::to_string(w.patch_size));
    Tensor planes = patch_to_planes(patch.pixels);
    Tensor batch(std::vector<int>{1, 2, patch.size(), patch.size()}, planes.v);
    Tensor feats = featnet_infer(w, batch);
    return Tensor({w.arch.feat_dim}, feats.v);
}

std::vector<double> instance_probability(const Tensor& v, const MemoryBank& bank, double tau) {
    UFMRI_CHECK(tau > 0, "instance_probability: tau must be > 0");
    UFMRI_CHECK(v.numel() == bank.dim(), "instance_probability: dimension mismatch");
    const int n = bank.size(), d = bank.dim();
    std::vector<double> logits(static_cast<std::size_t>(n));
    double mx = -1e300;
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += bank.rows[static_cast<std::int64_t>(i) * d + j] * v[j];
        logits[static_cast<std::size_t>(i)] = s / tau;
        mx = std::max(mx, logits[static_cast<std::size_t>(i)]);
    }
    double se = 0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        se += l;
    }
    for (double& l : logits) l /= se;
    return logits;
}

ContrastiveLoss contrastive_loss(const FeatWeights& w, const ParamVars& vars,
                                 const MemoryBank& bank, const ContrastiveBatch& batch,
                                 double tau) {
    ad::Var x = ad::Var::constant(batch.patches);
    ad::Var features = featnet_apply(w.arch, vars, x);
    UFMRI_CHECK(features.val().all_finite(), "contrastive_loss: non-finite features");
    ContrastiveLoss out;
    out.loss = ad::cross_entropy_bank(features, bank.rows, batch.indices, tau);
    out.features = features.val();
    return out;
}

void update_bank(MemoryBank& bank, const std::vector<int>& indices, const Tensor& features,
                 double momentum) {
    const int d = bank.dim();
    UFMRI_CHECK(features.ndim() == 2 && features.dim(1) == d, "update_bank: shape mismatch");
    UFMRI_CHECK(static_cast<int>(indices.size()) == features.dim(0), "update_bank: count mismatch");
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const int i = indices[b];
        UFMRI_CHECK(i >= 0 && i < bank.size(), "update_bank: index out of range");
        double s = 0;
        for (int j = 0; j < d; ++j) {
            double v = features[static_cast<std::int64_t>(b) * d + j];
            if (momentum > 0)
                v = momentum * bank.rows[static_cast<std::int64_t>(i) * d + j] + (1 - momentum) * v;
            bank.rows[static_cast<std::int64_t>(i) * d + j] = v;
            s += v * v;
        }
        const double inv = 1.0 / std::sqrt(s);
        for (int j = 0; j < d; ++j) bank.rows[static_cast<std::int64_t>(i) * d + j] *= inv;
    }
}

namespace {

Tensor gather_patch_batch(const Dataset& ds, const std::vector<BankPatchRef>& refs,
                          const std::vector<int>& ids, int p) {
    Tensor batch = Tensor::zeros({static_cast<int>(ids.size()), 2, p, p});
    const std::int64_t plane = static_cast<std::int64_t>(p) * p;
    for (std::size_t b = 0; b < ids.size(); ++b) {
        const BankPatchRef& r = refs[static_cast<std::size_t>(ids[b])];
        const CTensor& img = ds.slices[static_cast<std::size_t>(r.slice)].image;
        const int w = img.dim(1);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) {
                const cplx v = img[static_cast<std::int64_t>(r.row + i) * w + (r.col + j)];
                batch.v[static_cast<std::size_t>((static_cast<std::int64_t>(b) * 2) * plane + i * p + j)] = v.real();
                batch.v[static_cast<std::size_t>((static_cast<std::int64_t>(b) * 2 + 1) * plane + i * p + j)] = v.imag();
            }
    }
    return batch;
}

} // namespace

PretrainResult pretrain_ufnet(const Dataset& dataset, const FeatNetArch& arch,
                              const FeatTrainConfig& cfg, std::uint64_t seed,
                              const std::function<void(int, double, const MemoryBank&)>& epoch_hook,
                              const std::string& abort_checkpoint_path) {
    UFMRI_CHECK(!dataset.slices.empty(), "pretrain_ufnet: empty dataset");
    UFMRI_CHECK(cfg.tau > 0 && cfg.batch >= 1 && cfg.epochs >= 1 && cfg.patches_per_slice >= 1,
                "pretrain_ufnet: invalid config");

    // Fixed random patch locations, one pool for the whole run. Patches are
    // materialized per batch; only coordinates are stored.
    std::vector<BankPatchRef> refs;
    refs.reserve(dataset.slices.size() * static_cast<std::size_t>(cfg.patches_per_slice));
    for (std::size_t s = 0; s < dataset.slices.size(); ++s) {
        const Slice& sl = dataset.slices[s];
        UFMRI_CHECK(cfg.patch_size <= std::min(sl.height(), sl.width()),
                    "pretrain_ufnet: patch size larger than slice");
        Rng rng(derive_seed(seed, 1000003 + s));
        for (int k = 0; k < cfg.patches_per_slice; ++k) {
            BankPatchRef r;
            r.slice = static_cast<int>(s);
            r.row = rng.uniform_int(0, sl.height() - cfg.patch_size);
            r.col = rng.uniform_int(0, sl.width() - cfg.patch_size);
            refs.push_back(r);
        }
    }
    const int n = static_cast<int>(refs.size());

    PretrainResult res;
    res.weights = FeatWeights::init(arch, cfg.patch_size, derive_seed(seed, 1));
    res.bank = MemoryBank::random_init(n, arch.feat_dim, derive_seed(seed, 2));
    res.refs = refs;

    Adam opt;
    opt.lr = cfg.lr;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(seed, 3));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double loss_sum = 0;
        int steps = 0;
        for (int start = 0; start < n; start += cfg.batch) {
            const int bs = std::min(cfg.batch, n - start);
            ContrastiveBatch batch;
            batch.indices.assign(order.begin() + start, order.begin() + start + bs);
            batch.patches = gather_patch_batch(dataset, refs, batch.indices, cfg.patch_size);

            ParamVars vars(res.weights.params, /*trainable=*/true);
            ContrastiveLoss cl = contrastive_loss(res.weights, vars, res.bank, batch, cfg.tau);
            const double lv = cl.loss.item();
            if (!std::isfinite(lv)) {
                if (!abort_checkpoint_path.empty())
                    save_featnet(abort_checkpoint_path, res.weights, res.bank,
                                 {{"aborted_epoch", std::to_string(epoch)}}, res.refs);
                fail("pretrain_ufnet: non-finite loss at epoch " + std::to_string(epoch));
            }
            ad::backward(cl.loss);
            opt.step(res.weights.params, vars.collect_grads());
            update_bank(res.bank, batch.indices, cl.features, cfg.bank_momentum);

            loss_sum += lv;
            ++steps;
        }
        const double mean_loss = loss_sum / steps;
        res.epoch_loss.push_back(mean_loss);
        if (epoch_hook) epoch_hook(epoch, mean_loss, res.bank);
    }
    return res;
}

void save_featnet(const std::string& path, const FeatWeights& w, const MemoryBank& bank,
                  const std::map<std::string, std::string>& meta,
                  const std::vector<BankPatchRef>& refs) {
    NamedArrays na;
    for (const auto& item : w.params.items) na.put_tensor("weights/" + item.name, item.value);
    na.put_tensor("bank", bank.rows);
    if (!refs.empty()) {
        std::vector<std::int64_t> flat;
        flat.reserve(refs.size() * 3);
        for (const BankPatchRef& r : refs) {
            flat.push_back(r.slice);
            flat.push_back(r.row);
            flat.push_back(r.col);
        }
        na.put_i8("bank_refs", {static_cast<int>(refs.size()), 3}, flat.data());
    }
    json cfg;
    cfg["arch"] = json::parse(w.arch.to_json());
    cfg["patch_size"] = w.patch_size;
    na.put_str("config", {cfg.dump()});
    na.meta = meta;
    na.save(path);
}

FeatCheckpoint load_featnet(const std::string& path) {
    NamedArrays na = NamedArrays::load(path);
    json cfg = json::parse(na.get_str("config").at(0));
    FeatCheckpoint out;
    out.weights.arch = FeatNetArch::from_json(cfg.at("arch").dump());
    out.weights.patch_size = cfg.at("patch_size").get<int>();
    // re-create the layout, then overwrite values from the file
    out.weights.params = featnet_init(out.weights.arch, 0);
    for (auto& item : out.weights.params.items) {
        Tensor stored = na.get_tensor("weights/" + item.name);
        UFMRI_CHECK(stored.same_shape(item.value), "featnet checkpoint: shape mismatch for " + item.name);
        item.value = std::move(stored);
    }
    out.bank.rows = na.get_tensor("bank");
    if (na.has("bank_refs")) {
        std::vector<std::int64_t> flat = na.get_i8("bank_refs");
        for (std::size_t i = 0; i + 2 < flat.size(); i += 3)
            out.refs.push_back({static_cast<int>(flat[i]), static_cast<int>(flat[i + 1]),
                                static_cast<int>(flat[i + 2])});
    }
    return out;
}

} // namespace ufmri
