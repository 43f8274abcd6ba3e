#include "ufmri/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ufmri {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& why) {
    fail("config schema error at \"" + path + "\": " + why);
}

template <typename T>
void take(json& j, const std::string& ctx, const std::string& key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        schema_error(ctx + "." + key, "wrong type");
    }
    j.erase(key);
}

void expect_empty(const json& j, const std::string& ctx) {
    for (auto& [k, v] : j.items()) schema_error(ctx + "." + k, "unknown field");
}

json arch_to_json(const FeatNetArch& a) { return json::parse(a.to_json()); }
json arch_to_json(const UNetArch& a) { return json::parse(a.to_json()); }

} // namespace

ExperimentConfig ExperimentConfig::profile_desk() {
    ExperimentConfig c;
    c.profile = "desk";
    c.seed = 7;
    c.dataset = DatasetConfig{500, 50, 50, 64, 64};
    c.sample = SampleSpec{"random1d", 4.0, 0.08, 24, 4};
    c.featnet_arch = featnet_arch_desk();
    c.featnet.tau = 0.2;
    c.featnet.batch = 16;
    c.featnet.epochs = 3;
    c.featnet.lr = 1e-4;
    c.featnet.patches_per_slice = 80;
    c.featnet.patch_size = 40;
    c.unet_arch = unet_arch_desk();
    c.unrolled = UnrollConfig{5, 6, 10, 1e-3, 4};
    c.ufloss = UflossConfig{40, 5, 1.5};
    c.pics.solve = PicsConfig{1e-3, 200, 3, 0.0};
    c.pics.lam_sweep = {3e-4, 1e-3, 3e-3, 1e-2};
    for (int i = 0; i <= 10; ++i) c.studies.betas.push_back(0.01 * i);
    c.studies.blur_rs = {1.0, 1.5, 2.0, 3.0, 4.0};
    c.studies.noise_seeds = 3;
    c.studies.phantoms = 10;
    c.studies.deblur_alpha = 0.0;
    c.studies.deblur_steps = 200;
    c.studies.deblur_r0 = 4.0;
    return c;
}

ExperimentConfig ExperimentConfig::profile_paper() {
    ExperimentConfig c = profile_desk();
    c.profile = "paper";
    c.dataset = DatasetConfig{6080, 640, 320, 320, 320};
    c.sample = SampleSpec{"random1d", 5.0, 0.08, 24, 8};
    c.featnet_arch = featnet_arch_paper();
    c.featnet = FeatTrainConfig{};  // tau 1, batch 16, 100 epochs, lr 1e-4, 80/slice
    c.featnet.patch_size = 60;
    c.unet_arch = unet_arch_paper();
    c.unrolled = UnrollConfig{5, 6, 50, 1e-4, 4};
    c.ufloss = UflossConfig{60, 5, 1.5};
    return c;
}

ExperimentConfig ExperimentConfig::from_profile(const std::string& name) {
    if (name == "desk") return profile_desk();
    if (name == "paper") return profile_paper();
    fail("unknown profile \"" + name + "\" (expected desk or paper)");
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["profile"] = profile;
    j["dataset"] = {{"train", dataset.train}, {"val", dataset.val},   {"test", dataset.test},
                    {"height", dataset.height}, {"width", dataset.width}};
    j["sample"] = {{"mask_type", sample.mask_type}, {"accel", sample.accel},
                   {"center_fraction", sample.center_fraction}, {"calib", sample.calib},
                   {"coils", sample.coils}};
    j["featnet_arch"] = arch_to_json(featnet_arch);
    j["featnet"] = {{"tau", featnet.tau},       {"batch", featnet.batch},
                    {"epochs", featnet.epochs}, {"lr", featnet.lr},
                    {"patches_per_slice", featnet.patches_per_slice},
                    {"patch_size", featnet.patch_size},
                    {"bank_momentum", featnet.bank_momentum}};
    j["unet_arch"] = arch_to_json(unet_arch);
    j["unrolled"] = {{"unrolls", unrolled.unrolls}, {"cg_steps", unrolled.cg_steps},
                     {"epochs", unrolled.epochs},   {"lr", unrolled.lr},
                     {"batch", unrolled.batch}};
    j["ufloss"] = {{"patch_size", ufloss.patch_size}, {"stride", ufloss.stride}, {"mu", ufloss.mu}};
    j["pics"] = {{"lam", pics.solve.lam}, {"iters", pics.solve.iters},
                 {"wavelet_levels", pics.solve.wavelet_levels},
                 {"step", pics.solve.step <= 0 ? json("auto") : json(pics.solve.step)},
                 {"lam_sweep", pics.lam_sweep}};
    j["studies"] = {{"betas", studies.betas},
                    {"blur_rs", studies.blur_rs},
                    {"noise_seeds", studies.noise_seeds},
                    {"phantoms", studies.phantoms},
                    {"deblur_alpha", studies.deblur_alpha},
                    {"deblur_steps", studies.deblur_steps},
                    {"deblur_r0", studies.deblur_r0}};
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const ExperimentConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c = base;
    take(j, "", "seed", c.seed);
    take(j, "", "out_dir", c.out_dir);
    take(j, "", "profile", c.profile);
    if (j.contains("dataset")) {
        json s = j.at("dataset");
        take(s, "dataset", "train", c.dataset.train);
        take(s, "dataset", "val", c.dataset.val);
        take(s, "dataset", "test", c.dataset.test);
        take(s, "dataset", "height", c.dataset.height);
        take(s, "dataset", "width", c.dataset.width);
        expect_empty(s, "dataset");
        j.erase("dataset");
    }
    if (j.contains("sample")) {
        json s = j.at("sample");
        take(s, "sample", "mask_type", c.sample.mask_type);
        take(s, "sample", "accel", c.sample.accel);
        take(s, "sample", "center_fraction", c.sample.center_fraction);
        take(s, "sample", "calib", c.sample.calib);
        take(s, "sample", "coils", c.sample.coils);
        expect_empty(s, "sample");
        j.erase("sample");
    }
    if (j.contains("featnet_arch")) {
        json s = j.at("featnet_arch");
        take(s, "featnet_arch", "in_channels", c.featnet_arch.in_channels);
        take(s, "featnet_arch", "base_width", c.featnet_arch.base_width);
        take(s, "featnet_arch", "stage_blocks", c.featnet_arch.stage_blocks);
        take(s, "featnet_arch", "feat_dim", c.featnet_arch.feat_dim);
        take(s, "featnet_arch", "stem_kernel", c.featnet_arch.stem_kernel);
        take(s, "featnet_arch", "stem_stride", c.featnet_arch.stem_stride);
        take(s, "featnet_arch", "stem_pool", c.featnet_arch.stem_pool);
        expect_empty(s, "featnet_arch");
        j.erase("featnet_arch");
    }
    if (j.contains("featnet")) {
        json s = j.at("featnet");
        take(s, "featnet", "tau", c.featnet.tau);
        take(s, "featnet", "batch", c.featnet.batch);
        take(s, "featnet", "epochs", c.featnet.epochs);
        take(s, "featnet", "lr", c.featnet.lr);
        take(s, "featnet", "patches_per_slice", c.featnet.patches_per_slice);
        take(s, "featnet", "patch_size", c.featnet.patch_size);
        take(s, "featnet", "bank_momentum", c.featnet.bank_momentum);
        expect_empty(s, "featnet");
        j.erase("featnet");
    }
    if (j.contains("unet_arch")) {
        json s = j.at("unet_arch");
        take(s, "unet_arch", "in_channels", c.unet_arch.in_channels);
        take(s, "unet_arch", "out_channels", c.unet_arch.out_channels);
        take(s, "unet_arch", "base_width", c.unet_arch.base_width);
        take(s, "unet_arch", "levels", c.unet_arch.levels);
        expect_empty(s, "unet_arch");
        j.erase("unet_arch");
    }
    if (j.contains("unrolled")) {
        json s = j.at("unrolled");
        take(s, "unrolled", "unrolls", c.unrolled.unrolls);
        take(s, "unrolled", "cg_steps", c.unrolled.cg_steps);
        take(s, "unrolled", "epochs", c.unrolled.epochs);
        take(s, "unrolled", "lr", c.unrolled.lr);
        take(s, "unrolled", "batch", c.unrolled.batch);
        expect_empty(s, "unrolled");
        j.erase("unrolled");
    }
    if (j.contains("ufloss")) {
        json s = j.at("ufloss");
        take(s, "ufloss", "patch_size", c.ufloss.patch_size);
        take(s, "ufloss", "stride", c.ufloss.stride);
        take(s, "ufloss", "mu", c.ufloss.mu);
        expect_empty(s, "ufloss");
        j.erase("ufloss");
    }
    if (j.contains("pics")) {
        json s = j.at("pics");
        take(s, "pics", "lam", c.pics.solve.lam);
        take(s, "pics", "iters", c.pics.solve.iters);
        take(s, "pics", "wavelet_levels", c.pics.solve.wavelet_levels);
        if (s.contains("step")) {
            if (s.at("step").is_string()) {
                if (s.at("step").get<std::string>() != "auto")
                    schema_error("pics.step", "expected a number or \"auto\"");
                c.pics.solve.step = 0.0;
            } else if (s.at("step").is_number()) {
                c.pics.solve.step = s.at("step").get<double>();
            } else {
                schema_error("pics.step", "expected a number or \"auto\"");
            }
            s.erase("step");
        }
        take(s, "pics", "lam_sweep", c.pics.lam_sweep);
        expect_empty(s, "pics");
        j.erase("pics");
    }
    if (j.contains("studies")) {
        json s = j.at("studies");
        take(s, "studies", "betas", c.studies.betas);
        take(s, "studies", "blur_rs", c.studies.blur_rs);
        take(s, "studies", "noise_seeds", c.studies.noise_seeds);
        take(s, "studies", "phantoms", c.studies.phantoms);
        take(s, "studies", "deblur_alpha", c.studies.deblur_alpha);
        take(s, "studies", "deblur_steps", c.studies.deblur_steps);
        take(s, "studies", "deblur_r0", c.studies.deblur_r0);
        expect_empty(s, "studies");
        j.erase("studies");
    }
    expect_empty(j, "");
    return c;
}

void ExperimentConfig::set_override(const std::string& dotted_key, const std::string& value) {
    // rebuild through JSON so type checks and unknown-field errors apply
    json j = json::parse(to_json_text());
    std::vector<std::string> parts;
    std::stringstream ss(dotted_key);
    std::string p;
    while (std::getline(ss, p, '.')) parts.push_back(p);
    UFMRI_CHECK(!parts.empty(), "empty override key");
    json* cur = &j;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!cur->contains(parts[i])) schema_error(dotted_key, "unknown field");
        cur = &(*cur)[parts[i]];
    }
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // plain string
    }
    (*cur)[parts.back()] = parsed;
    *this = from_json_text(j.dump(), *this);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json_text()); }

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    UFMRI_CHECK(in.good(), "cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return fnv1a_hex(ss.str());
}

void update_manifest(const std::string& out_dir, const std::string& artifact_path,
                     const std::string& config_hash, std::uint64_t seed) {
    const fs::path mpath = fs::path(out_dir) / "manifest.json";
    json m = json::object();
    if (fs::exists(mpath)) {
        std::ifstream in(mpath);
        try {
            in >> m;
        } catch (const json::exception&) {
            m = json::object();
        }
    }
    const std::string rel = fs::relative(artifact_path, out_dir).string();
    m[rel] = {{"hash", file_hash(artifact_path)}, {"config_hash", config_hash}, {"seed", seed}};
    std::ofstream out(mpath, std::ios::trunc);
    out << m.dump(2) << "\n";
}

} // namespace ufmri
