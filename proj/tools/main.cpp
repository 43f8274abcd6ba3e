// Command-line front end: data generation, both trainings, reconstruction,
// baselines, the validation studies and reporting, driven by a declarative
// config with dot-path overrides.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <ufmri/config.hpp>
#include <ufmri/container.hpp>
#include <ufmri/csv.hpp>
#include <ufmri/data.hpp>
#include <ufmri/encode.hpp>
#include <ufmri/eval.hpp>
#include <ufmri/featnet.hpp>
#include <ufmri/fft.hpp>
#include <ufmri/image_io.hpp>
#include <ufmri/metrics.hpp>
#include <ufmri/pics.hpp>
#include <ufmri/rng.hpp>
#include <ufmri/ufloss.hpp>
#include <ufmri/unrolled.hpp>

namespace fs = std::filesystem;
using namespace ufmri;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string profile = "desk";
    std::string out;
    std::vector<std::string> sets;
    std::int64_t seed = -1;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    UFMRI_CHECK(in.good(), "cannot open: " + path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

ExperimentConfig resolve_config(const GlobalOpts& g) {
    ExperimentConfig cfg = ExperimentConfig::from_profile(g.profile);
    if (!g.config_path.empty()) cfg = ExperimentConfig::from_json_text(slurp(g.config_path), cfg);
    for (const std::string& kv : g.sets) {
        const auto eq = kv.find('=');
        UFMRI_CHECK(eq != std::string::npos, "--set expects key=value, got: " + kv);
        cfg.set_override(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
    if (!g.out.empty()) cfg.out_dir = g.out;
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::map<std::string, std::string> base_meta(const ExperimentConfig& cfg) {
    return {{"config_hash", cfg.hash()}, {"seed", std::to_string(cfg.seed)}};
}

void record(const ExperimentConfig& cfg, const std::string& path) {
    update_manifest(cfg.out_dir, path, cfg.hash(), cfg.seed);
    std::printf("wrote %s\n", path.c_str());
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

// split stream tags keep per-slice masks distinct across splits
std::uint64_t split_stream(Split s) {
    switch (s) {
        case Split::train: return 101;
        case Split::val: return 102;
        case Split::test: return 103;
    }
    return 0;
}

std::vector<KSpaceSample> samples_for(const ExperimentConfig& cfg, const Dataset& ds) {
    return build_samples(ds, cfg.sample, derive_seed(cfg.seed, split_stream(ds.split)));
}

Dataset load_split(const ExperimentConfig& cfg, const std::string& name) {
    const std::string path = out_path(cfg, "dataset_" + name + ".ufna");
    UFMRI_CHECK(fs::exists(path), "missing artifact: " + path + " (run gen-data first)");
    return load_dataset(path);
}

FeatCheckpoint load_featnet_artifact(const ExperimentConfig& cfg, const std::string& override_path) {
    const std::string path = override_path.empty() ? out_path(cfg, "featnet.ufna") : override_path;
    UFMRI_CHECK(fs::exists(path), "missing artifact: " + path + " (run train-ufnet first)");
    return load_featnet(path);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const ExperimentConfig& cfg) {
    struct Part {
        const char* name;
        int count;
        Split split;
    };
    const Part parts[] = {{"train", cfg.dataset.train, Split::train},
                          {"val", cfg.dataset.val, Split::val},
                          {"test", cfg.dataset.test, Split::test}};
    for (const Part& p : parts) {
        if (p.count <= 0) continue;
        Dataset ds = make_phantom_dataset(p.count, cfg.dataset.height, cfg.dataset.width,
                                          derive_seed(cfg.seed, split_stream(p.split)), p.split);
        const std::string path = out_path(cfg, std::string("dataset_") + p.name + ".ufna");
        save_dataset(ds, path, base_meta(cfg));
        record(cfg, path);
    }
    return 0;
}

int cmd_mask_gen(const ExperimentConfig& cfg, const std::string& type, double accel, int calib,
                 double center_fraction) {
    SamplingMask m;
    if (type == "poisson")
        m = make_mask_poisson(cfg.dataset.height, cfg.dataset.width, accel, calib, cfg.seed);
    else if (type == "random1d")
        m = make_mask_1d_random(cfg.dataset.height, cfg.dataset.width, accel, center_fraction,
                                cfg.seed);
    else
        fail("mask-gen: unknown --type \"" + type + "\" (random1d or poisson)");
    const std::string path = out_path(cfg, "mask_" + type + ".ufna");
    save_mask(m, path, base_meta(cfg));
    std::printf("mask %s: %dx%d fraction %.4f\n", type.c_str(), m.h, m.w, m.fraction());
    record(cfg, path);
    return 0;
}

int cmd_train_ufnet(const ExperimentConfig& cfg) {
    Dataset train = load_split(cfg, "train");
    CsvWriter log(out_path(cfg, "ufnet_train_log.csv"), {"epoch", "mean_loss", "bank_norm_err"});
    PretrainResult res = pretrain_ufnet(
        train, cfg.featnet_arch, cfg.featnet, cfg.seed,
        [&](int epoch, double mean_loss, const MemoryBank& bank) {
            const double err = bank.max_row_norm_error();
            UFMRI_CHECK(err < 1e-6, "memory bank row norms drifted");
            log.row({std::to_string(epoch), CsvWriter::num(mean_loss), CsvWriter::num(err)});
            std::printf("epoch %d  loss %.4f\n", epoch, mean_loss);
        },
        out_path(cfg, "featnet_abort.ufna"));
    const std::string path = out_path(cfg, "featnet.ufna");
    save_featnet(path, res.weights, res.bank, base_meta(cfg), res.refs);
    record(cfg, path);
    record(cfg, out_path(cfg, "ufnet_train_log.csv"));
    return 0;
}

int cmd_train_recon(const ExperimentConfig& cfg, const std::string& loss, double mu_override) {
    UFMRI_CHECK(loss == "l2" || loss == "ufloss", "train-recon: --loss must be l2 or ufloss");
    Dataset train_ds = load_split(cfg, "train");
    Dataset val_ds = load_split(cfg, "val");
    auto train = samples_for(cfg, train_ds);
    auto val = samples_for(cfg, val_ds);

    FeatCheckpoint feat;
    const FeatWeights* feat_w = nullptr;
    UflossConfig uf = cfg.ufloss;
    if (mu_override >= 0) uf.mu = mu_override;
    if (loss == "ufloss") {
        feat = load_featnet_artifact(cfg, "");
        feat_w = &feat.weights;
    }

    CsvWriter step_log(out_path(cfg, "recon_train_log_" + loss + ".csv"),
                       {"step", "total", "mse", "ufloss"});
    CsvWriter val_log(out_path(cfg, "recon_val_log_" + loss + ".csv"),
                      {"epoch", "nrmse", "ssim", "ufloss"});
    TrainModlResult res = train_modl(
        train, val, feat_w, cfg.unet_arch, cfg.unrolled, uf, cfg.seed,
        [&](int step, const ReconLossParts& p) {
            step_log.row({std::to_string(step), CsvWriter::num(p.total), CsvWriter::num(p.mse),
                          CsvWriter::num(p.ufloss)});
        },
        [&](int epoch, const ValMetrics& m) {
            val_log.row({std::to_string(epoch), CsvWriter::num(m.nrmse), CsvWriter::num(m.ssim),
                         CsvWriter::num(m.ufloss)});
            std::printf("epoch %d  val nrmse %.4f  ssim %.4f  ufloss %.4f\n", epoch, m.nrmse,
                        m.ssim, m.ufloss);
        },
        out_path(cfg, "recon_" + loss + "_abort.ufna"));

    auto meta = base_meta(cfg);
    meta["loss"] = loss;
    meta["mu"] = std::to_string(uf.mu);
    meta["best_epoch"] = std::to_string(res.best_epoch);
    const std::string path = out_path(cfg, "recon_" + loss + ".ufna");
    save_recon(path, res.best, meta);
    record(cfg, path);
    record(cfg, out_path(cfg, "recon_train_log_" + loss + ".csv"));
    record(cfg, out_path(cfg, "recon_val_log_" + loss + ".csv"));
    return 0;
}

void write_recon_container(const ExperimentConfig& cfg, const std::string& path,
                           const std::vector<CTensor>& images,
                           const std::vector<std::string>& ids, const std::string& method) {
    UFMRI_CHECK(!images.empty(), "no reconstructions to write");
    const int n = static_cast<int>(images.size());
    const int h = images[0].dim(0), w = images[0].dim(1);
    CTensor stack = CTensor::zeros({n, h, w});
    for (int i = 0; i < n; ++i)
        std::copy(images[static_cast<std::size_t>(i)].v.begin(),
                  images[static_cast<std::size_t>(i)].v.end(),
                  stack.v.begin() + static_cast<std::ptrdiff_t>(i) * h * w);
    NamedArrays na;
    na.put_ctensor("image", stack);
    na.put_str("subject", ids);
    na.put_str("contrast", std::vector<std::string>(ids.size(), "recon"));
    na.meta = base_meta(cfg);
    na.meta["method"] = method;
    na.save(path);
}

std::vector<MetricsRow> evaluate_rows(const std::vector<CTensor>& recons, const Dataset& truth,
                                      const std::string& method, const FeatWeights* feat_w,
                                      const UflossConfig& uf) {
    std::vector<MetricsRow> rows;
    for (std::size_t i = 0; i < recons.size(); ++i) {
        MetricsRow r;
        r.method = method;
        r.slice_id = truth.slices[i].subject_id;
        r.nrmse = nrmse(recons[i], truth.slices[i].image);
        r.ssim = ssim(recons[i], truth.slices[i].image);
        if (feat_w) r.ufloss = ufloss_value(truth.slices[i].image, recons[i], *feat_w, uf, 0, 0);
        rows.push_back(r);
    }
    return rows;
}

void write_metrics_csv(const ExperimentConfig& cfg, const std::vector<MetricsRow>& rows,
                       const std::string& method) {
    CsvWriter out(out_path(cfg, "metrics_" + method + ".csv"),
                  {"method", "slice_id", "nrmse", "ssim", "ufloss"});
    for (const MetricsRow& r : rows)
        out.row({r.method, r.slice_id, CsvWriter::num(r.nrmse), CsvWriter::num(r.ssim),
                 CsvWriter::num(r.ufloss)});
    record(cfg, out_path(cfg, "metrics_" + method + ".csv"));
}

int cmd_recon_pics(const ExperimentConfig& cfg, double lam_flag, int iters_flag) {
    Dataset test_ds = load_split(cfg, "test");
    auto test = samples_for(cfg, test_ds);
    PicsConfig solve = cfg.pics.solve;
    if (iters_flag > 0) solve.iters = iters_flag;

    double lam = lam_flag;
    if (lam <= 0) {
        // small sweep on validation slices, best mean SSIM wins
        Dataset val_ds = load_split(cfg, "val");
        auto val = samples_for(cfg, val_ds);
        const std::size_t probe = std::min<std::size_t>(val.size(), 8);
        double best_ssim = -2;
        for (double cand : cfg.pics.lam_sweep) {
            PicsConfig c = solve;
            c.lam = cand;
            double acc = 0;
            for (std::size_t i = 0; i < probe; ++i) {
                PicsResult r = pics_reconstruct(val[i].y, val[i].maps, val[i].mask, c);
                acc += ssim(r.image, val[i].target.image);
            }
            acc /= static_cast<double>(probe);
            std::printf("pics lam %.2e  val ssim %.4f\n", cand, acc);
            if (acc > best_ssim) {
                best_ssim = acc;
                lam = cand;
            }
        }
        std::printf("pics: chose lam %.2e\n", lam);
    }
    solve.lam = lam;

    std::vector<CTensor> recons;
    std::vector<std::string> ids;
    for (const KSpaceSample& s : test) {
        PicsResult r = pics_reconstruct(s.y, s.maps, s.mask, solve);
        recons.push_back(std::move(r.image));
        ids.push_back(s.target.subject_id);
    }
    const std::string rpath = out_path(cfg, "recon_images_pics.ufna");
    write_recon_container(cfg, rpath, recons, ids, "pics");
    record(cfg, rpath);

    FeatCheckpoint feat;
    const FeatWeights* feat_w = nullptr;
    if (fs::exists(out_path(cfg, "featnet.ufna"))) {
        feat = load_featnet_artifact(cfg, "");
        feat_w = &feat.weights;
    }
    write_metrics_csv(cfg, evaluate_rows(recons, test_ds, "pics", feat_w, cfg.ufloss), "pics");
    return 0;
}

int cmd_reconstruct(const ExperimentConfig& cfg, const std::string& checkpoint,
                    const std::string& input, const std::string& output,
                    const std::string& method) {
    Dataset ds = input.empty() ? load_split(cfg, "test") : load_dataset(input);
    auto samples = samples_for(cfg, ds);
    std::vector<CTensor> recons;
    std::vector<std::string> ids;
    if (method == "zero-filled") {
        for (const KSpaceSample& s : samples) {
            recons.push_back(e_adjoint(s.y, s.maps, s.mask));
            ids.push_back(s.target.subject_id);
        }
    } else {
        UFMRI_CHECK(!checkpoint.empty(), "reconstruct: --checkpoint required for the modl method");
        UFMRI_CHECK(fs::exists(checkpoint), "missing artifact: " + checkpoint);
        ReconWeights w = load_recon(checkpoint);
        for (const KSpaceSample& s : samples) {
            recons.push_back(modl_forward(s.y, s.maps, s.mask, w, cfg.unrolled));
            ids.push_back(s.target.subject_id);
        }
    }
    const std::string path = output.empty() ? out_path(cfg, "recon_images_" + method + ".ufna") : output;
    write_recon_container(cfg, path, recons, ids, method);
    record(cfg, path);
    // preview of the first slice
    const std::string png = out_path(cfg, "recon_preview_" + method + ".png");
    write_png_gray(png, magnitude_image(recons[0]));
    record(cfg, png);
    return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& recon_path,
                 const std::string& dataset_path, const std::string& method,
                 const std::string& featnet_path) {
    Dataset truth = dataset_path.empty() ? load_split(cfg, "test") : load_dataset(dataset_path);
    UFMRI_CHECK(fs::exists(recon_path), "missing artifact: " + recon_path);
    Dataset recon_ds = load_dataset(recon_path);
    UFMRI_CHECK(recon_ds.slices.size() == truth.slices.size(),
                "evaluate: reconstruction and dataset slice counts differ");
    std::vector<CTensor> recons;
    for (const Slice& s : recon_ds.slices) recons.push_back(s.image);

    FeatCheckpoint feat;
    const FeatWeights* feat_w = nullptr;
    const std::string fpath = featnet_path.empty() ? out_path(cfg, "featnet.ufna") : featnet_path;
    if (fs::exists(fpath)) {
        feat = load_featnet(fpath);
        feat_w = &feat.weights;
    }
    write_metrics_csv(cfg, evaluate_rows(recons, truth, method, feat_w, cfg.ufloss), method);
    return 0;
}

int cmd_study_perturb(const ExperimentConfig& cfg) {
    Dataset test = load_split(cfg, "test");
    FeatCheckpoint feat = load_featnet_artifact(cfg, "");
    const int n = std::min<int>(cfg.studies.phantoms, static_cast<int>(test.slices.size()));
    UFMRI_CHECK(n >= 1, "study-perturb: no test slices");

    std::vector<double> noise_mean(cfg.studies.betas.size(), 0.0);
    std::vector<double> blur_mean(cfg.studies.blur_rs.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        const Slice& s = test.slices[static_cast<std::size_t>(i)];
        StudyCurve nc = perturbation_study_noise(s.image, cfg.studies.betas, feat.weights,
                                                 cfg.ufloss, cfg.studies.noise_seeds,
                                                 derive_seed(cfg.seed, 500 + static_cast<std::uint64_t>(i)));
        StudyCurve bc = perturbation_study_blur(s.image, cfg.studies.blur_rs, feat.weights, cfg.ufloss);
        CsvWriter per(out_path(cfg, "perturb-noise_" + s.subject_id + "_ufloss.csv"),
                      {"beta", "ufloss"});
        for (std::size_t k = 0; k < nc.x.size(); ++k) {
            per.row({CsvWriter::num(nc.x[k]), CsvWriter::num(nc.y[k])});
            noise_mean[k] += nc.y[k] / n;
        }
        CsvWriter perb(out_path(cfg, "perturb-blur_" + s.subject_id + "_ufloss.csv"),
                       {"R", "ufloss"});
        for (std::size_t k = 0; k < bc.x.size(); ++k) {
            perb.row({CsvWriter::num(bc.x[k]), CsvWriter::num(bc.y[k])});
            blur_mean[k] += bc.y[k] / n;
        }
    }
    CsvWriter mn(out_path(cfg, "perturb-noise_mean_ufloss.csv"), {"beta", "ufloss"});
    for (std::size_t k = 0; k < cfg.studies.betas.size(); ++k)
        mn.row({CsvWriter::num(cfg.studies.betas[k]), CsvWriter::num(noise_mean[k])});
    CsvWriter mb(out_path(cfg, "perturb-blur_mean_ufloss.csv"), {"R", "ufloss"});
    for (std::size_t k = 0; k < cfg.studies.blur_rs.size(); ++k)
        mb.row({CsvWriter::num(cfg.studies.blur_rs[k]), CsvWriter::num(blur_mean[k])});
    write_curve_png(out_path(cfg, "perturb-noise_mean_ufloss.png"), cfg.studies.betas, noise_mean);
    write_curve_png(out_path(cfg, "perturb-blur_mean_ufloss.png"), cfg.studies.blur_rs, blur_mean);
    for (const char* f : {"perturb-noise_mean_ufloss.csv", "perturb-blur_mean_ufloss.csv",
                          "perturb-noise_mean_ufloss.png", "perturb-blur_mean_ufloss.png"})
        record(cfg, out_path(cfg, f));
    return 0;
}

int cmd_study_deblur(const ExperimentConfig& cfg) {
    Dataset test = load_split(cfg, "test");
    FeatCheckpoint feat = load_featnet_artifact(cfg, "");
    const int n = std::min<int>(cfg.studies.phantoms, static_cast<int>(test.slices.size()));
    UFMRI_CHECK(n >= 1, "study-deblur: no test slices");

    double alpha = cfg.studies.deblur_alpha;
    if (alpha <= 0) {
        alpha = tune_deblur_alpha(test.slices[0].image, cfg.studies.deblur_r0, 1.0, feat.weights,
                                  cfg.ufloss);
        std::printf("deblur: tuned alpha %.3g\n", alpha);
    }
    for (int i = 0; i < n; ++i) {
        const Slice& s = test.slices[static_cast<std::size_t>(i)];
        DeblurResult res = deblur_descent(s.image, cfg.studies.deblur_r0, alpha,
                                          cfg.studies.deblur_steps, feat.weights, cfg.ufloss);
        CsvWriter curve(out_path(cfg, "deblur_" + s.subject_id + "_ufloss.csv"),
                        {"iter", "ufloss", "nrmse"});
        for (std::size_t k = 0; k < res.curve.x.size(); ++k)
            curve.row({CsvWriter::num(res.curve.x[k]), CsvWriter::num(res.curve.y[k]),
                       CsvWriter::num(res.curve.y_nrmse[k])});
        if (i == 0) {
            write_curve_png(out_path(cfg, "deblur_" + s.subject_id + "_ufloss.png"), res.curve.x,
                            res.curve.y);
            write_png_gray(out_path(cfg, "deblur_" + s.subject_id + "_final.png"),
                           magnitude_image(res.final_image));
            record(cfg, out_path(cfg, "deblur_" + s.subject_id + "_ufloss.png"));
        }
        record(cfg, out_path(cfg, "deblur_" + s.subject_id + "_ufloss.csv"));
    }
    return 0;
}

int cmd_retrieve(const ExperimentConfig& cfg, int slice, int row, int col, int k) {
    Dataset test = load_split(cfg, "test");
    FeatCheckpoint feat = load_featnet_artifact(cfg, "");
    UFMRI_CHECK(slice >= 0 && slice < static_cast<int>(test.slices.size()),
                "retrieve: --slice out of range");
    const Slice& s = test.slices[static_cast<std::size_t>(slice)];
    const int p = feat.weights.patch_size;
    UFMRI_CHECK(row >= 0 && col >= 0 && row + p <= s.height() && col + p <= s.width(),
                "retrieve: query patch out of bounds");
    Patch q;
    q.row = row;
    q.col = col;
    q.source_slice = s.subject_id;
    q.pixels = CTensor::zeros({p, p});
    for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
            q.pixels[static_cast<std::int64_t>(r) * p + c] =
                s.image[static_cast<std::int64_t>(row + r) * s.width() + col + c];

    auto neighbors = retrieve_neighbors(q, feat.weights, feat.bank, k);
    const std::string csv = out_path(cfg, "retrieve_" + s.subject_id + "_ufloss.csv");
    CsvWriter out(csv, {"rank", "bank_index", "inner_product", "slice", "row", "col"});
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const auto& nb = neighbors[i];
        std::string rslice = "-1", rrow = "-1", rcol = "-1";
        if (static_cast<std::size_t>(nb.index) < feat.refs.size()) {
            rslice = std::to_string(feat.refs[static_cast<std::size_t>(nb.index)].slice);
            rrow = std::to_string(feat.refs[static_cast<std::size_t>(nb.index)].row);
            rcol = std::to_string(feat.refs[static_cast<std::size_t>(nb.index)].col);
        }
        out.row({std::to_string(i + 1), std::to_string(nb.index), CsvWriter::num(nb.inner), rslice,
                 rrow, rcol});
    }
    write_png_gray(out_path(cfg, "retrieve_" + s.subject_id + "_query.png"),
                   magnitude_image(q.pixels));
    record(cfg, csv);
    return 0;
}

int cmd_correlate(const ExperimentConfig& cfg, int source_slice, int row, int col,
                  int target_slice, int stride) {
    Dataset test = load_split(cfg, "test");
    FeatCheckpoint feat = load_featnet_artifact(cfg, "");
    const int ns = static_cast<int>(test.slices.size());
    UFMRI_CHECK(source_slice >= 0 && source_slice < ns && target_slice >= 0 && target_slice < ns,
                "correlate: slice index out of range");
    const Slice& src_slice = test.slices[static_cast<std::size_t>(source_slice)];
    const Slice& tgt = test.slices[static_cast<std::size_t>(target_slice)];
    const int p = feat.weights.patch_size;
    UFMRI_CHECK(row + p <= src_slice.height() && col + p <= src_slice.width(),
                "correlate: source patch out of bounds");
    Patch src;
    src.row = row;
    src.col = col;
    src.pixels = CTensor::zeros({p, p});
    for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
            src.pixels[static_cast<std::int64_t>(r) * p + c] =
                src_slice.image[static_cast<std::int64_t>(row + r) * src_slice.width() + col + c];

    HeatMap uf = correlation_map(src, tgt, feat.weights, stride);
    HeatMap sm = ssim_correlation_map(src, tgt, stride);
    const std::string tag = src_slice.subject_id + "-" + tgt.subject_id;
    CsvWriter out(out_path(cfg, "correlate_" + tag + "_ufloss.csv"), {"grid_row", "grid_col", "inner"});
    const int gw = uf.values.dim(1);
    for (int r = 0; r < uf.values.dim(0); ++r)
        for (int c = 0; c < gw; ++c)
            out.row({std::to_string(r), std::to_string(c),
                     CsvWriter::num(uf.values[static_cast<std::int64_t>(r) * gw + c])});
    // rendered map clamps negatives; the CSV keeps them
    Tensor rendered = uf.values;
    for (double& v : rendered.v) v = std::max(v, 0.0);
    write_png_colormap(out_path(cfg, "correlate_" + tag + "_ufloss.png"), rendered, 0.0, 1.0);
    write_png_colormap(out_path(cfg, "correlate_" + tag + "_ssim.png"), sm.values);
    record(cfg, out_path(cfg, "correlate_" + tag + "_ufloss.csv"));
    record(cfg, out_path(cfg, "correlate_" + tag + "_ufloss.png"));
    record(cfg, out_path(cfg, "correlate_" + tag + "_ssim.png"));
    return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
    std::vector<std::string> methods;
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("metrics_", 0) == 0 && name.size() > 12)
            methods.push_back(name.substr(8, name.size() - 12));
    }
    std::sort(methods.begin(), methods.end());
    UFMRI_CHECK(!methods.empty(), "report: no metrics_*.csv files in " + cfg.out_dir);

    auto quartiles = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        auto pick = [&](double q) {
            const double rank = q * (v.size() - 1);
            const std::size_t lo = static_cast<std::size_t>(rank);
            const double frac = rank - lo;
            return v[lo] + frac * (v[std::min(lo + 1, v.size() - 1)] - v[lo]);
        };
        return std::array<double, 3>{pick(0.25), pick(0.5), pick(0.75)};
    };

    CsvWriter out(out_path(cfg, "report.csv"),
                  {"method", "n", "nrmse_q1", "nrmse_median", "nrmse_q3", "ssim_q1", "ssim_median",
                   "ssim_q3", "ufloss_q1", "ufloss_median", "ufloss_q3"});
    std::printf("%-14s %5s  %-10s %-10s %-10s\n", "method", "n", "nrmse~", "ssim~", "ufloss~");
    for (const std::string& m : methods) {
        CsvTable t = CsvTable::read(out_path(cfg, "metrics_" + m + ".csv"));
        const int cn = t.col("nrmse"), cs = t.col("ssim"), cu = t.col("ufloss");
        std::vector<double> vn, vs, vu;
        for (const auto& r : t.rows) {
            vn.push_back(std::stod(r[static_cast<std::size_t>(cn)]));
            vs.push_back(std::stod(r[static_cast<std::size_t>(cs)]));
            vu.push_back(std::stod(r[static_cast<std::size_t>(cu)]));
        }
        if (vn.empty()) continue;
        auto qn = quartiles(vn), qs = quartiles(vs), qu = quartiles(vu);
        out.row({m, std::to_string(vn.size()), CsvWriter::num(qn[0]), CsvWriter::num(qn[1]),
                 CsvWriter::num(qn[2]), CsvWriter::num(qs[0]), CsvWriter::num(qs[1]),
                 CsvWriter::num(qs[2]), CsvWriter::num(qu[0]), CsvWriter::num(qu[1]),
                 CsvWriter::num(qu[2])});
        std::printf("%-14s %5zu  %-10.5f %-10.5f %-10.5f\n", m.c_str(), vn.size(), qn[1], qs[1],
                    qu[1]);
    }
    record(cfg, out_path(cfg, "report.csv"));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised-feature-loss MRI reconstruction toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON experiment config");
    app.add_option("--profile", g.profile, "base profile: desk or paper")->default_val("desk");
    app.add_option("--set", g.sets, "dot-path override, e.g. unrolled.lr=3e-4");
    app.add_option("--seed", g.seed, "global seed override");
    app.add_option("--out", g.out, "output directory override");

    auto* gen = app.add_subcommand("gen-data", "generate the phantom dataset splits");

    auto* mask = app.add_subcommand("mask-gen", "generate a sampling mask file");
    std::string mask_type = "random1d";
    double mask_accel = -1, mask_cf = -1;
    int mask_calib = -1;
    mask->add_option("--type", mask_type, "random1d or poisson");
    mask->add_option("--accel", mask_accel, "acceleration factor");
    mask->add_option("--calib", mask_calib, "calibration size (poisson)");
    mask->add_option("--center-fraction", mask_cf, "center fraction (random1d)");

    auto* tufn = app.add_subcommand("train-ufnet", "pretrain the feature mapping network");

    auto* trec = app.add_subcommand("train-recon", "train the unrolled reconstructor");
    std::string loss = "ufloss";
    double mu_override = -1;
    trec->add_option("--loss", loss, "l2 or ufloss");
    trec->add_option("--mu", mu_override, "override the feature-loss weight");

    auto* pics = app.add_subcommand("recon-pics", "compressed-sensing wavelet baseline");
    double pics_lam = -1;
    int pics_iters = -1;
    pics->add_option("--lam", pics_lam, "l1 weight (omit to sweep on validation)");
    pics->add_option("--iters", pics_iters, "iterations");

    auto* rec = app.add_subcommand("reconstruct", "apply a trained checkpoint (or zero-filled)");
    std::string rec_ckpt, rec_in, rec_out, rec_method = "modl";
    rec->add_option("--checkpoint", rec_ckpt, "recon checkpoint file");
    rec->add_option("--input", rec_in, "input dataset (default: test split)");
    rec->add_option("--output", rec_out, "output container path");
    rec->add_option("--method", rec_method, "modl or zero-filled");

    auto* ev = app.add_subcommand("evaluate", "metrics for a reconstruction container");
    std::string ev_recon, ev_ds, ev_method = "recon", ev_featnet;
    ev->add_option("--recon", ev_recon, "reconstruction container")->required();
    ev->add_option("--dataset", ev_ds, "ground-truth dataset (default: test split)");
    ev->add_option("--method", ev_method, "method label for the rows");
    ev->add_option("--featnet", ev_featnet, "feature network checkpoint");

    auto* sp = app.add_subcommand("study-perturb", "UFLoss vs noise and blur levels");
    auto* sd = app.add_subcommand("study-deblur", "gradient-descent deblurring study");

    auto* rt = app.add_subcommand("retrieve", "nearest training patches for a query patch");
    int rt_slice = 0, rt_row = 0, rt_col = 0, rt_k = 8;
    rt->add_option("--slice", rt_slice, "test slice index");
    rt->add_option("--row", rt_row, "query patch row");
    rt->add_option("--col", rt_col, "query patch column");
    rt->add_option("--k", rt_k, "neighbors to return");

    auto* co = app.add_subcommand("correlate", "feature / SSIM correlation heat maps");
    int co_src = 0, co_row = 0, co_col = 0, co_tgt = 1, co_stride = 5;
    co->add_option("--source-slice", co_src, "source slice index");
    co->add_option("--row", co_row, "source patch row");
    co->add_option("--col", co_col, "source patch column");
    co->add_option("--target-slice", co_tgt, "target slice index");
    co->add_option("--stride", co_stride, "grid stride");

    auto* rp = app.add_subcommand("report", "aggregate metrics into median/IQR tables");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = resolve_config(g);
        if (gen->parsed()) return cmd_gen_data(cfg);
        if (mask->parsed()) {
            const bool poisson = mask_type == "poisson";
            if (mask_accel <= 0) mask_accel = poisson ? 8.0 : cfg.sample.accel;
            if (mask_calib <= 0) mask_calib = cfg.sample.calib;
            if (mask_cf <= 0) mask_cf = cfg.sample.center_fraction;
            return cmd_mask_gen(cfg, mask_type, mask_accel, mask_calib, mask_cf);
        }
        if (tufn->parsed()) return cmd_train_ufnet(cfg);
        if (trec->parsed()) return cmd_train_recon(cfg, loss, mu_override);
        if (pics->parsed()) return cmd_recon_pics(cfg, pics_lam, pics_iters);
        if (rec->parsed()) return cmd_reconstruct(cfg, rec_ckpt, rec_in, rec_out, rec_method);
        if (ev->parsed()) return cmd_evaluate(cfg, ev_recon, ev_ds, ev_method, ev_featnet);
        if (sp->parsed()) return cmd_study_perturb(cfg);
        if (sd->parsed()) return cmd_study_deblur(cfg);
        if (rt->parsed()) return cmd_retrieve(cfg, rt_slice, rt_row, rt_col, rt_k);
        if (co->parsed()) return cmd_correlate(cfg, co_src, co_row, co_col, co_tgt, co_stride);
        if (rp->parsed()) return cmd_report(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
