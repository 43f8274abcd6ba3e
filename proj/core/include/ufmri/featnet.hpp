#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ufmri/data.hpp"
#include "ufmri/nn.hpp"

namespace ufmri {

/// Trained feature mapping: backbone weights plus the patch size they were
/// trained on. Forward output is always an L2-normalized feat_dim vector.
struct FeatWeights {
    FeatNetArch arch;
    ParamSet params;
    int patch_size = 0;

    static FeatWeights init(const FeatNetArch& arch, int patch_size, std::uint64_t seed);
};

/// One stored feature per training patch, row i <-> patch identity i.
struct MemoryBank {
    Tensor rows;  // [N, d]

    int size() const { return rows.dim(0); }
    int dim() const { return rows.dim(1); }
    static MemoryBank random_init(int n, int d, std::uint64_t seed);
    double max_row_norm_error() const;  // max over rows of | ||row|| - 1 |
};

struct FeatTrainConfig {
    double tau = 1.0;
    int batch = 16;
    int epochs = 100;
    double lr = 1e-4;
    int patches_per_slice = 80;
    int patch_size = 60;
    double bank_momentum = 0.0;  // 0 = direct replacement
};

/// Complex patch -> [2, P, P] planes (real, imaginary channels).
Tensor patch_to_planes(const CTensor& pixels);

/// Batched inference: x [B, 2, P, P] -> unit-norm features [B, d].
Tensor featnet_infer(const FeatWeights& w, const Tensor& batch);

/// Single-patch convenience wrapper around featnet_infer.
Tensor feature_map(const Patch& patch, const FeatWeights& w);

/// P(i | v) over the whole bank with temperature tau, max-subtracted softmax.
std::vector<double> instance_probability(const Tensor& v, const MemoryBank& bank, double tau);

struct ContrastiveBatch {
    std::vector<int> indices;  // bank identities
    Tensor patches;            // [B, 2, P, P]
};

struct ContrastiveLoss {
    ad::Var loss;      // scalar
    Tensor features;   // [B, d] fresh values for the bank update
};

/// Mean over the batch of -log P(i | f(p_i)); bank rows are treated as
/// constants (gradient flows through the batch features only).
ContrastiveLoss contrastive_loss(const FeatWeights& w, const ParamVars& vars,
                                 const MemoryBank& bank, const ContrastiveBatch& batch,
                                 double tau);

/// Replace (or momentum-blend) bank rows with fresh features; rows stay
/// unit-norm.
void update_bank(MemoryBank& bank, const std::vector<int>& indices, const Tensor& features,
                 double momentum);

/// Identity of a bank row: where its patch was cut from.
struct BankPatchRef {
    int slice = 0;
    int row = 0, col = 0;
};

struct PretrainResult {
    FeatWeights weights;
    MemoryBank bank;
    std::vector<BankPatchRef> refs;  // refs[i] <-> bank row i
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Memory-bank instance discrimination over random patches of the dataset.
/// epoch_hook (optional) runs after every epoch with (epoch, mean_loss, bank).
PretrainResult pretrain_ufnet(
    const Dataset& dataset, const FeatNetArch& arch, const FeatTrainConfig& cfg,
    std::uint64_t seed,
    const std::function<void(int, double, const MemoryBank&)>& epoch_hook = nullptr,
    const std::string& abort_checkpoint_path = "");

void save_featnet(const std::string& path, const FeatWeights& w, const MemoryBank& bank,
                  const std::map<std::string, std::string>& meta = {},
                  const std::vector<BankPatchRef>& refs = {});
struct FeatCheckpoint {
    FeatWeights weights;
    MemoryBank bank;
    std::vector<BankPatchRef> refs;
};
FeatCheckpoint load_featnet(const std::string& path);

} // namespace ufmri
