#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ufmri/featnet.hpp"
#include "ufmri/nn.hpp"
#include "ufmri/pics.hpp"
#include "ufmri/ufloss.hpp"
#include "ufmri/unrolled.hpp"

namespace ufmri {

struct DatasetConfig {
    int train = 500, val = 50, test = 50;
    int height = 64, width = 64;
};

struct StudiesConfig {
    std::vector<double> betas;      // noise levels, first must be 0
    std::vector<double> blur_rs;    // cropping rates, first must be 1
    int noise_seeds = 3;
    int phantoms = 10;
    double deblur_alpha = 0.0;      // 0 = tune by line search
    int deblur_steps = 200;
    double deblur_r0 = 4.0;
};

struct PicsExpConfig {
    PicsConfig solve;
    std::vector<double> lam_sweep;  // candidates scored by SSIM on val slices
};

/// Declarative description of a full experiment; everything a CLI run needs.
struct ExperimentConfig {
    std::uint64_t seed = 7;
    std::string out_dir = "runs/out";
    std::string profile = "desk";

    DatasetConfig dataset;
    SampleSpec sample;
    FeatNetArch featnet_arch;
    FeatTrainConfig featnet;
    UNetArch unet_arch;
    UnrollConfig unrolled;
    UflossConfig ufloss;
    PicsExpConfig pics;
    StudiesConfig studies;

    static ExperimentConfig profile_desk();
    static ExperimentConfig profile_paper();
    static ExperimentConfig from_profile(const std::string& name);

    /// Strict parse: unknown or ill-typed fields raise errors naming the field.
    static ExperimentConfig from_json_text(const std::string& text, const ExperimentConfig& base);
    std::string to_json_text() const;

    /// Dot-path override, e.g. set("unrolled.lr", "3e-4").
    void set_override(const std::string& dotted_key, const std::string& value);

    /// FNV-1a of the canonical serialized form.
    std::string hash() const;
};

std::string fnv1a_hex(const std::string& bytes);
std::string file_hash(const std::string& path);

/// Append/refresh one artifact entry in <out_dir>/manifest.json.
void update_manifest(const std::string& out_dir, const std::string& artifact_path,
                     const std::string& config_hash, std::uint64_t seed);

} // namespace ufmri
