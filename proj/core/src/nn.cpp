#include "ufmri/nn.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "ufmri/rng.hpp"

namespace ufmri {

using json = nlohmann::json;

int ParamSet::add(const std::string& name, Tensor t) {
    UFMRI_CHECK(index_of(name) < 0, "duplicate parameter name: " + name);
    items.push_back({name, std::move(t)});
    return static_cast<int>(items.size()) - 1;
}

int ParamSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].name == name) return static_cast<int>(i);
    return -1;
}

const Tensor& ParamSet::at(const std::string& name) const {
    const int i = index_of(name);
    UFMRI_CHECK(i >= 0, "missing parameter: " + name);
    return items[static_cast<std::size_t>(i)].value;
}

std::int64_t ParamSet::total_size() const {
    std::int64_t n = 0;
    for (const auto& it : items) n += it.value.numel();
    return n;
}

ParamVars::ParamVars(const ParamSet& p, bool trainable) : set_(&p) {
    vars_.reserve(p.items.size());
    for (std::size_t i = 0; i < p.items.size(); ++i) {
        vars_.push_back(trainable ? ad::Var::leaf(p.items[i].value)
                                  : ad::Var::constant(p.items[i].value));
        index_[p.items[i].name] = static_cast<int>(i);
    }
}

ad::Var ParamVars::get(const std::string& name) const {
    auto it = index_.find(name);
    UFMRI_CHECK(it != index_.end(), "network references unknown parameter: " + name);
    used_.insert(name);
    return vars_[static_cast<std::size_t>(it->second)];
}

std::vector<Tensor> ParamVars::collect_grads() const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        const auto& n = vars_[i].node();
        if (n->grad.v.empty()) out.push_back(Tensor::zeros(n->val.shape));
        else out.push_back(n->grad);
    }
    return out;
}

void ParamVars::check_all_used() const {
    for (const auto& it : set_->items)
        UFMRI_CHECK(used_.count(it.name), "parameter never consumed by the network: " + it.name);
}

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads) {
    UFMRI_CHECK(grads.size() == params.items.size(), "Adam: gradient count mismatch");
    if (m.empty()) {
        for (const auto& it : params.items) {
            m.push_back(Tensor::zeros(it.value.shape));
            v.push_back(Tensor::zeros(it.value.shape));
        }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.items.size(); ++i) {
        Tensor& p = params.items[i].value;
        const Tensor& g = grads[i];
        UFMRI_CHECK(g.same_shape(p), "Adam: gradient shape mismatch for " + params.items[i].name);
        for (std::int64_t k = 0; k < p.numel(); ++k) {
            m[i][k] = beta1 * m[i][k] + (1 - beta1) * g[k];
            v[i][k] = beta2 * v[i][k] + (1 - beta2) * g[k] * g[k];
            const double mhat = m[i][k] / bc1;
            const double vhat = v[i][k] / bc2;
            p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// feature backbone

namespace {

Tensor conv_init(int o, int c, int kh, int kw, Rng& rng) {
    Tensor t = Tensor::zeros({o, c, kh, kw});
    const double stddev = std::sqrt(2.0 / (static_cast<double>(c) * kh * kw));
    rng.fill_normal(t, stddev);
    return t;
}

} // namespace

FeatNetArch featnet_arch_paper() { return FeatNetArch{}; }

FeatNetArch featnet_arch_desk() {
    FeatNetArch a;
    a.base_width = 8;
    a.stage_blocks = {1, 1};
    a.feat_dim = 64;
    a.stem_kernel = 3;
    a.stem_stride = 2;
    a.stem_pool = false;
    return a;
}

FeatNetArch featnet_arch_tiny() {
    FeatNetArch a;
    a.base_width = 4;
    a.stage_blocks = {1, 1};
    a.feat_dim = 8;
    a.stem_kernel = 3;
    a.stem_stride = 2;
    a.stem_pool = false;
    return a;
}

std::string FeatNetArch::to_json() const {
    json j;
    j["in_channels"] = in_channels;
    j["base_width"] = base_width;
    j["stage_blocks"] = stage_blocks;
    j["feat_dim"] = feat_dim;
    j["stem_kernel"] = stem_kernel;
    j["stem_stride"] = stem_stride;
    j["stem_pool"] = stem_pool;
    return j.dump();
}

FeatNetArch FeatNetArch::from_json(const std::string& s) {
    json j = json::parse(s);
    FeatNetArch a;
    a.in_channels = j.at("in_channels").get<int>();
    a.base_width = j.at("base_width").get<int>();
    a.stage_blocks = j.at("stage_blocks").get<std::vector<int>>();
    a.feat_dim = j.at("feat_dim").get<int>();
    a.stem_kernel = j.at("stem_kernel").get<int>();
    a.stem_stride = j.at("stem_stride").get<int>();
    a.stem_pool = j.at("stem_pool").get<bool>();
    return a;
}

ParamSet featnet_init(const FeatNetArch& arch, std::uint64_t seed) {
    Rng rng(seed);
    ParamSet p;
    p.add("stem.w", conv_init(arch.base_width, arch.in_channels, arch.stem_kernel, arch.stem_kernel, rng));
    p.add("stem.b", Tensor::zeros({arch.base_width}));
    int in_w = arch.base_width;
    for (std::size_t s = 0; s < arch.stage_blocks.size(); ++s) {
        const int w = arch.base_width << s;
        for (int b = 0; b < arch.stage_blocks[s]; ++b) {
            const std::string pre = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
            const bool first = (b == 0);
            const int cin = first ? in_w : w;
            p.add(pre + "conv1.w", conv_init(w, cin, 3, 3, rng));
            p.add(pre + "conv1.b", Tensor::zeros({w}));
            p.add(pre + "conv2.w", conv_init(w, w, 3, 3, rng));
            p.add(pre + "conv2.b", Tensor::zeros({w}));
            const bool downsample = first && s > 0;
            if (downsample || cin != w) {
                p.add(pre + "proj.w", conv_init(w, cin, 1, 1, rng));
                p.add(pre + "proj.b", Tensor::zeros({w}));
            }
        }
        in_w = w;
    }
    {
        Tensor fc = Tensor::zeros({arch.feat_dim, in_w});
        rng.fill_normal(fc, std::sqrt(1.0 / in_w));
        p.add("fc.w", std::move(fc));
        // nonzero bias keeps the pre-normalization feature away from the
        // origin even for all-zero patches (background regions)
        Tensor fb = Tensor::zeros({arch.feat_dim});
        rng.fill_normal(fb, 0.1);
        p.add("fc.b", std::move(fb));
    }
    return p;
}

ad::Var featnet_apply(const FeatNetArch& arch, const ParamVars& w, ad::Var x) {
    using namespace ad;
    UFMRI_CHECK(x.val().ndim() == 4 && x.val().dim(1) == arch.in_channels,
                "featnet_apply: expects [B," + std::to_string(arch.in_channels) + ",P,P]");
    Var h = relu(conv2d(x, w.get("stem.w"), w.get("stem.b"), arch.stem_stride, arch.stem_kernel / 2));
    if (arch.stem_pool) h = maxpool2(h);
    for (std::size_t s = 0; s < arch.stage_blocks.size(); ++s) {
        for (int b = 0; b < arch.stage_blocks[s]; ++b) {
            const std::string pre = "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
            const bool first = (b == 0);
            const bool downsample = first && s > 0;
            const int stride = downsample ? 2 : 1;
            Var y = relu(conv2d(h, w.get(pre + "conv1.w"), w.get(pre + "conv1.b"), stride, 1));
            y = conv2d(y, w.get(pre + "conv2.w"), w.get(pre + "conv2.b"), 1, 1);
            Var skip = h;
            const int cin = h.val().dim(1);
            const int cout = y.val().dim(1);
            if (downsample || cin != cout)
                skip = conv2d(h, w.get(pre + "proj.w"), w.get(pre + "proj.b"), stride, 0);
            h = relu(add(y, skip));
        }
    }
    Var feat = linear(global_avg_pool(h), w.get("fc.w"), w.get("fc.b"));
    return l2_normalize_rows(feat);
}

// ---------------------------------------------------------------------------
// U-Net

UNetArch unet_arch_paper() { return UNetArch{}; }

UNetArch unet_arch_desk() {
    UNetArch a;
    a.base_width = 16;
    a.levels = 2;
    return a;
}

UNetArch unet_arch_tiny() {
    UNetArch a;
    a.base_width = 4;
    a.levels = 2;
    return a;
}

std::string UNetArch::to_json() const {
    json j;
    j["in_channels"] = in_channels;
    j["out_channels"] = out_channels;
    j["base_width"] = base_width;
    j["levels"] = levels;
    return j.dump();
}

UNetArch UNetArch::from_json(const std::string& s) {
    json j = json::parse(s);
    UNetArch a;
    a.in_channels = j.at("in_channels").get<int>();
    a.out_channels = j.at("out_channels").get<int>();
    a.base_width = j.at("base_width").get<int>();
    a.levels = j.at("levels").get<int>();
    return a;
}

ParamSet unet_init(const UNetArch& arch, std::uint64_t seed) {
    Rng rng(seed);
    ParamSet p;
    for (int l = 0; l < arch.levels; ++l) {
        const int w = arch.base_width << l;
        const int cin = l == 0 ? arch.in_channels : (arch.base_width << (l - 1));
        p.add("enc" + std::to_string(l) + ".c1.w", conv_init(w, cin, 3, 3, rng));
        p.add("enc" + std::to_string(l) + ".c1.b", Tensor::zeros({w}));
        p.add("enc" + std::to_string(l) + ".c2.w", conv_init(w, w, 3, 3, rng));
        p.add("enc" + std::to_string(l) + ".c2.b", Tensor::zeros({w}));
    }
    for (int l = arch.levels - 1; l >= 1; --l) {
        const int w = arch.base_width << (l - 1);
        p.add("up" + std::to_string(l) + ".w", conv_init(w, 2 * w, 3, 3, rng));
        p.add("up" + std::to_string(l) + ".b", Tensor::zeros({w}));
        p.add("dec" + std::to_string(l) + ".c1.w", conv_init(w, 2 * w, 3, 3, rng));
        p.add("dec" + std::to_string(l) + ".c1.b", Tensor::zeros({w}));
        p.add("dec" + std::to_string(l) + ".c2.w", conv_init(w, w, 3, 3, rng));
        p.add("dec" + std::to_string(l) + ".c2.b", Tensor::zeros({w}));
    }
    p.add("final.w", Tensor::zeros({arch.out_channels, arch.base_width, 3, 3}));
    p.add("final.b", Tensor::zeros({arch.out_channels}));
    return p;
}

ad::Var unet_apply(const UNetArch& arch, const ParamVars& w, ad::Var x) {
    using namespace ad;
    UFMRI_CHECK(x.val().ndim() == 4 && x.val().dim(1) == arch.in_channels,
                "unet_apply: expects [B," + std::to_string(arch.in_channels) + ",H,W]");
    const int div = 1 << (arch.levels - 1);
    UFMRI_CHECK(x.val().dim(2) % div == 0 && x.val().dim(3) % div == 0,
                "unet_apply: H and W must be divisible by 2^(levels-1)");
    std::vector<Var> enc;
    Var h = x;
    for (int l = 0; l < arch.levels; ++l) {
        if (l > 0) h = avgpool2(h);
        const std::string pre = "enc" + std::to_string(l) + ".";
        h = relu(conv2d(h, w.get(pre + "c1.w"), w.get(pre + "c1.b"), 1, 1));
        h = relu(conv2d(h, w.get(pre + "c2.w"), w.get(pre + "c2.b"), 1, 1));
        enc.push_back(h);
    }
    for (int l = arch.levels - 1; l >= 1; --l) {
        h = upsample_nearest2(h);
        h = relu(conv2d(h, w.get("up" + std::to_string(l) + ".w"),
                        w.get("up" + std::to_string(l) + ".b"), 1, 1));
        h = concat_ch(enc[static_cast<std::size_t>(l - 1)], h);
        const std::string pre = "dec" + std::to_string(l) + ".";
        h = relu(conv2d(h, w.get(pre + "c1.w"), w.get(pre + "c1.b"), 1, 1));
        h = relu(conv2d(h, w.get(pre + "c2.w"), w.get(pre + "c2.b"), 1, 1));
    }
    Var out = conv2d(h, w.get("final.w"), w.get("final.b"), 1, 1);
    return add(x, out);  // global residual
}

} // namespace ufmri
