#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ufmri/autodiff.hpp"
#include "ufmri/tensor.hpp"

namespace ufmri {

/// Ordered, named parameter collection. Order is the layout used for
/// gradient accumulation and optimizer state.
struct ParamSet {
    struct Item {
        std::string name;
        Tensor value;
    };
    std::vector<Item> items;

    int add(const std::string& name, Tensor t);
    int index_of(const std::string& name) const;  // -1 if missing
    const Tensor& at(const std::string& name) const;
    std::int64_t total_size() const;
};

/// Per-graph binding of parameters to autodiff vars (leaves when training,
/// constants for inference). apply-functions fetch by name; consumed names
/// are tracked so a mismatch between init and apply fails loudly.
class ParamVars {
public:
    ParamVars(const ParamSet& p, bool trainable);

    ad::Var get(const std::string& name) const;
    /// Gradients in ParamSet order (zero tensors where untouched).
    std::vector<Tensor> collect_grads() const;
    void check_all_used() const;

private:
    const ParamSet* set_;
    std::vector<ad::Var> vars_;
    mutable std::set<std::string> used_;
    std::map<std::string, int> index_;
};

struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;
    std::vector<Tensor> m, v;

    void step(ParamSet& params, const std::vector<Tensor>& grads);
};

// ---------------------------------------------------------------------------
// Feature mapping backbone: residual conv stages + global average pool +
// linear head + L2 normalization. Depth/width configurable.

struct FeatNetArch {
    int in_channels = 2;
    int base_width = 64;
    std::vector<int> stage_blocks = {2, 2, 2, 2};  // width doubles per stage
    int feat_dim = 128;
    int stem_kernel = 7;
    int stem_stride = 2;
    bool stem_pool = true;  // 2x2 maxpool after the stem

    std::string to_json() const;
    static FeatNetArch from_json(const std::string& s);
};

FeatNetArch featnet_arch_paper();  // ResNet-18-sized, d = 128
FeatNetArch featnet_arch_desk();   // 2 stages, base 8, d = 64
FeatNetArch featnet_arch_tiny();   // for finite-difference tests

ParamSet featnet_init(const FeatNetArch& arch, std::uint64_t seed);

/// x: [B, in_channels, P, P] -> [B, feat_dim], rows unit-norm.
ad::Var featnet_apply(const FeatNetArch& arch, const ParamVars& w, ad::Var x);

// ---------------------------------------------------------------------------
// U-Net denoiser with a global residual connection; the final conv is
// zero-initialized so an untrained denoiser is the identity.

struct UNetArch {
    int in_channels = 2;
    int out_channels = 2;
    int base_width = 64;
    int levels = 4;

    std::string to_json() const;
    static UNetArch from_json(const std::string& s);
};

UNetArch unet_arch_paper();  // 4 scales, 64 channels
UNetArch unet_arch_desk();   // 2 scales, 16 channels
UNetArch unet_arch_tiny();   // for finite-difference tests

ParamSet unet_init(const UNetArch& arch, std::uint64_t seed);

/// x: [B, in, H, W] -> [B, out, H, W]; H, W divisible by 2^(levels-1).
ad::Var unet_apply(const UNetArch& arch, const ParamVars& w, ad::Var x);

} // namespace ufmri
