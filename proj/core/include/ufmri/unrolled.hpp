#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ufmri/encode.hpp"
#include "ufmri/nn.hpp"
#include "ufmri/ufloss.hpp"

namespace ufmri {

/// Unrolled reconstructor weights: U-Net denoiser plus a trainable
/// data-consistency weight lam = softplus(lam_raw) >= 0.
struct ReconWeights {
    UNetArch arch;
    ParamSet params;  // denoiser weights + "lam_raw"

    double lam() const;
    static ReconWeights init(const UNetArch& arch, double lam_init, std::uint64_t seed);
};

struct UnrollConfig {
    int unrolls = 5;
    int cg_steps = 6;
    int epochs = 50;
    double lr = 1e-4;
    int batch = 4;
};

/// Learned denoiser step z = D_w(x) on a complex image.
CTensor denoise(const CTensor& x, const ReconWeights& w);

/// Alternates denoiser and CG data consistency from the zero-filled start;
/// unrolls = 0 returns E^H y.
CTensor modl_forward(const CTensor& y, const CoilMaps& maps, const SamplingMask& mask,
                     const ReconWeights& w, const UnrollConfig& cfg);

/// Differentiable graph for one sample; y is constant, weights come from vars.
ad::Var modl_forward_ad(const CTensor& y, ad::MapsPtr maps, ad::MaskPtr mask,
                        const UNetArch& arch, const ParamVars& vars, const UnrollConfig& cfg);

/// Retrospective undersampling of a whole dataset: per-slice masks and
/// synthetic coil maps derived deterministically from the seed.
struct SampleSpec {
    std::string mask_type = "random1d";  // random1d | poisson
    double accel = 4.0;
    double center_fraction = 0.08;
    int calib = 24;
    int coils = 4;
};
std::vector<KSpaceSample> build_samples(const Dataset& ds, const SampleSpec& spec,
                                        std::uint64_t seed);

struct ValMetrics {
    double nrmse = 0, ssim = 0, ufloss = 0;
};

struct TrainModlResult {
    ReconWeights best;            // lowest validation NRMSE
    ReconWeights last;
    std::vector<ValMetrics> val_log;  // one row per epoch
    int best_epoch = -1;
};

/// Supervised training with the combined loss; feat_w == nullptr trains the
/// pure-l2 arm on the same code path. step_hook(step, parts) and
/// epoch_hook(epoch, val) are optional observers.
TrainModlResult train_modl(
    const std::vector<KSpaceSample>& train, const std::vector<KSpaceSample>& val,
    const FeatWeights* feat_w, const UNetArch& arch, const UnrollConfig& cfg,
    const UflossConfig& ufloss_cfg, std::uint64_t seed,
    const std::function<void(int, const ReconLossParts&)>& step_hook = nullptr,
    const std::function<void(int, const ValMetrics&)>& epoch_hook = nullptr,
    const std::string& abort_checkpoint_path = "");

void save_recon(const std::string& path, const ReconWeights& w,
                const std::map<std::string, std::string>& meta = {});
ReconWeights load_recon(const std::string& path);

} // namespace ufmri
