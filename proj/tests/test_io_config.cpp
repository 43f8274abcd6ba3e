#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <ufmri/config.hpp>
#include <ufmri/container.hpp>
#include <ufmri/data.hpp>
#include <ufmri/encode.hpp>
#include <ufmri/featnet.hpp>

#include "test_util.hpp"

using namespace ufmri;
namespace fs = std::filesystem;
using testutil::random_cimage;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("container round-trips every dtype and metadata") {
    NamedArrays na;
    CTensor c = random_cimage(3, 4, 1);
    na.put_ctensor("image", c);
    Tensor t = testutil::random_tensor({2, 5}, 2);
    na.put_tensor("weights/layer", t);
    std::vector<std::uint8_t> u = {1, 0, 1, 1};
    na.put_u8("mask", {2, 2}, u.data());
    std::vector<std::int64_t> ids = {10, -3};
    na.put_i8("ids", {2}, ids.data());
    na.put_str("contrast", {"PD", "PDFS"});
    na.meta["seed"] = "7";

    const std::string path = tmp_path("ufmri_io_test.ufna");
    na.save(path);
    NamedArrays back = NamedArrays::load(path);
    CHECK(back.meta.at("seed") == "7");

    CTensor c2 = back.get_ctensor("image");
    REQUIRE(c2.shape == c.shape);
    for (std::int64_t i = 0; i < c.numel(); ++i) {
        // complex64 storage rounds to float
        CHECK(c2[i].real() == doctest::Approx(c[i].real()).epsilon(1e-6));
        CHECK(c2[i].imag() == doctest::Approx(c[i].imag()).epsilon(1e-6));
    }
    Tensor t2 = back.get_tensor("weights/layer");
    for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(t2[i] == t[i]);  // f8 exact
    std::vector<int> mshape;
    CHECK(back.get_u8("mask", &mshape) == u);
    CHECK(mshape == std::vector<int>{2, 2});
    CHECK(back.get_i8("ids") == ids);
    CHECK(back.get_str("contrast") == std::vector<std::string>{"PD", "PDFS"});
    CHECK_THROWS_AS((void)back.get_ctensor("nope"), Error);
    CHECK_THROWS_AS((void)back.get_tensor("mask"), Error);
}

TEST_CASE("container writes are byte-deterministic") {
    auto build = [] {
        NamedArrays na;
        na.put_ctensor("image", random_cimage(4, 4, 9));
        na.put_str("subject", {"a", "b"});
        na.meta["config_hash"] = "deadbeef";
        return na;
    };
    const std::string p1 = tmp_path("ufmri_det1.ufna"), p2 = tmp_path("ufmri_det2.ufna");
    build().save(p1);
    build().save(p2);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("dataset save/load round trip") {
    Dataset d = make_phantom_dataset(3, 64, 64, 11, Split::test);
    const std::string path = tmp_path("ufmri_ds_test.ufna");
    save_dataset(d, path, {{"seed", "11"}});
    Dataset back = load_dataset(path);
    CHECK(back.split == Split::test);
    REQUIRE(back.slices.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.slices[i].subject_id == d.slices[i].subject_id);
        CHECK(back.slices[i].contrast_tag == "synthetic");
        double err = 0;
        for (std::int64_t k = 0; k < d.slices[i].image.numel(); ++k)
            err += std::abs(back.slices[i].image[k] - d.slices[i].image[k]);
        CHECK(err / static_cast<double>(d.slices[i].image.numel()) < 1e-6);  // c8 rounding
        CHECK(back.normalization_scale.at(back.slices[i].subject_id) ==
              doctest::Approx(d.normalization_scale.at(d.slices[i].subject_id)));
    }
}

TEST_CASE("mask save/load round trip") {
    SamplingMask m = make_mask_poisson(64, 64, 6.0, 12, 13);
    const std::string path = tmp_path("ufmri_mask_test.ufna");
    save_mask(m, path);
    SamplingMask back = load_mask(path);
    CHECK(back.mask == m.mask);
    CHECK(back.h == 64);
    CHECK(back.acceleration == doctest::Approx(6.0));
    CHECK(back.calib_w == 12);
    CHECK(back.min_radius == doctest::Approx(m.min_radius));
}

TEST_CASE("featnet checkpoint round trip preserves inference") {
    FeatWeights w = FeatWeights::init(featnet_arch_tiny(), 12, 17);
    MemoryBank bank = MemoryBank::random_init(9, w.arch.feat_dim, 18);
    const std::string path = tmp_path("ufmri_feat_test.ufna");
    save_featnet(path, w, bank, {{"seed", "17"}});
    FeatCheckpoint back = load_featnet(path);
    CHECK(back.weights.patch_size == 12);
    CHECK(back.bank.size() == 9);
    Patch p;
    p.pixels = random_cimage(12, 12, 19);
    Tensor fa = feature_map(p, w), fb = feature_map(p, back.weights);
    for (std::int64_t i = 0; i < fa.numel(); ++i) CHECK(fa[i] == fb[i]);
    for (std::int64_t i = 0; i < bank.rows.numel(); ++i) CHECK(back.bank.rows[i] == bank.rows[i]);
}

TEST_CASE("real archive loader accepts kspace with optional maps") {
    const int n = 2, c = 3, h = 16, w = 16;
    CTensor ks = CTensor::zeros({n, c, h, w});
    Rng rng(21);
    for (cplx& v : ks.v) v = cplx(rng.normal(), rng.normal());
    NamedArrays na;
    na.put_ctensor("kspace", ks);
    const std::string path = tmp_path("ufmri_real_test.ufna");
    na.save(path);
    RealArchive ar = load_real_archive(path);
    REQUIRE(ar.kspace.size() == 2);
    CHECK(ar.maps.empty());
    CHECK(ar.kspace[0].shape == std::vector<int>{c, h, w});

    CoilMaps maps = synth_coil_maps(h, w, c, 22);
    CTensor mp = CTensor::zeros({n, c, h, w});
    for (int i = 0; i < n; ++i)
        std::copy(maps.maps.v.begin(), maps.maps.v.end(), mp.v.begin() + i * c * h * w);
    na.put_ctensor("maps", mp);
    na.save(path);
    RealArchive ar2 = load_real_archive(path);
    REQUIRE(ar2.maps.size() == 2);
}

TEST_CASE("config profiles, strict schema, overrides, hashing") {
    ExperimentConfig desk = ExperimentConfig::profile_desk();
    CHECK(desk.unrolled.unrolls == 5);
    CHECK(desk.unrolled.cg_steps == 6);
    CHECK(desk.ufloss.mu == doctest::Approx(1.5));
    CHECK(desk.ufloss.stride == 5);
    CHECK(desk.featnet.patches_per_slice == 80);
    CHECK(desk.studies.betas.size() == 11);

    ExperimentConfig paper = ExperimentConfig::profile_paper();
    CHECK(paper.featnet.tau == doctest::Approx(1.0));
    CHECK(paper.featnet.epochs == 100);
    CHECK(paper.featnet.lr == doctest::Approx(1e-4));
    CHECK(paper.featnet.patch_size == 60);
    CHECK(paper.featnet_arch.feat_dim == 128);
    CHECK(paper.sample.accel == doctest::Approx(5.0));
    CHECK(paper.unrolled.epochs == 50);

    // round trip through JSON keeps the hash
    ExperimentConfig back = ExperimentConfig::from_json_text(desk.to_json_text(), desk);
    CHECK(back.hash() == desk.hash());

    CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json_text(R"({"nope": 1})", desk),
                         doctest::Contains("nope"), Error);
    CHECK_THROWS_WITH_AS(
        (void)ExperimentConfig::from_json_text(R"({"unrolled": {"bogus_field": 2}})", desk),
        doctest::Contains("bogus_field"), Error);
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json_text(R"({"seed": "x"})", desk),
                         doctest::Contains("seed"), Error);

    ExperimentConfig tweaked = desk;
    tweaked.set_override("unrolled.lr", "3e-4");
    CHECK(tweaked.unrolled.lr == doctest::Approx(3e-4));
    CHECK(tweaked.hash() != desk.hash());
    CHECK_THROWS_AS(tweaked.set_override("unrolled.nope", "1"), Error);

    ExperimentConfig again = ExperimentConfig::profile_desk();
    CHECK(again.hash() == desk.hash());  // stable
}

TEST_CASE("manifest records artifacts with hashes") {
    const std::string dir = tmp_path("ufmri_manifest_dir");
    fs::create_directories(dir);
    const std::string art = dir + "/thing.ufna";
    NamedArrays na;
    na.put_str("k", {"v"});
    na.save(art);
    update_manifest(dir, art, "abc123", 7);
    const std::string manifest = slurp(dir + "/manifest.json");
    CHECK(manifest.find("thing.ufna") != std::string::npos);
    CHECK(manifest.find("abc123") != std::string::npos);
    CHECK(manifest.find(file_hash(art)) != std::string::npos);
}
