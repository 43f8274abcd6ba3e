#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <ufmri/data.hpp>
#include <ufmri/rng.hpp>

#include "test_util.hpp"

using namespace ufmri;
using testutil::random_cimage;

namespace {

Slice make_slice(CTensor img, const std::string& id = "s0") {
    Slice s;
    s.image = std::move(img);
    s.contrast_tag = "synthetic";
    s.subject_id = id;
    return s;
}

// independent sort-based percentile
double oracle_p95(const std::vector<Slice>& slices) {
    std::vector<double> m;
    for (const auto& s : slices)
        for (const cplx& p : s.image.v) m.push_back(std::abs(p));
    std::sort(m.begin(), m.end());
    const double rank = 0.95 * (m.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - lo;
    return m[lo] + frac * (m[std::min(lo + 1, m.size() - 1)] - m[lo]);
}

} // namespace

TEST_CASE("normalize_subject scales by the magnitude 95th percentile") {
    CTensor img = CTensor::zeros({10, 10});
    for (int i = 0; i < 100; ++i) img[i] = cplx(0, 2.0);  // constant magnitude 2
    auto out = normalize_subject({make_slice(img)});
    CHECK(out.scale == doctest::Approx(2.0));
    for (const cplx& p : out.slices[0].image.v) CHECK(std::abs(p - cplx(0, 1.0)) < 1e-12);
}

TEST_CASE("normalize_subject is idempotent") {
    std::vector<Slice> subj{make_slice(random_cimage(32, 32, 5), "a"),
                            make_slice(random_cimage(32, 32, 6), "a")};
    auto once = normalize_subject(subj);
    auto twice = normalize_subject(once.slices);
    CHECK(twice.scale == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t s = 0; s < subj.size(); ++s)
        for (std::int64_t i = 0; i < once.slices[s].image.numel(); ++i)
            CHECK(std::abs(twice.slices[s].image[i] - once.slices[s].image[i]) < 1e-9);
}

TEST_CASE("normalize_subject: 3-slice subject against the sort-based oracle") {
    std::vector<Slice> subj;
    for (int k = 0; k < 3; ++k) subj.push_back(make_slice(random_cimage(24, 24, 100 + k), "s"));
    auto out = normalize_subject(subj);
    CHECK(out.scale == doctest::Approx(oracle_p95(subj)).epsilon(1e-12));
    CHECK(oracle_p95(out.slices) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("normalize_subject rejects an all-zero subject") {
    CHECK_THROWS_AS((void)normalize_subject({make_slice(CTensor::zeros({8, 8}))}), Error);
    CHECK_THROWS_AS((void)normalize_subject({}), Error);
}

TEST_CASE("make_phantom_dataset is deterministic and seed-sensitive") {
    Dataset a = make_phantom_dataset(2, 64, 64, 7);
    Dataset b = make_phantom_dataset(2, 64, 64, 7);
    REQUIRE(a.slices.size() == 2);
    for (int s = 0; s < 2; ++s)
        for (std::int64_t i = 0; i < a.slices[0].image.numel(); ++i)
            CHECK(a.slices[static_cast<std::size_t>(s)].image[i] ==
                  b.slices[static_cast<std::size_t>(s)].image[i]);  // bit-identical

    Dataset c = make_phantom_dataset(2, 64, 64, 8);
    std::int64_t differing = 0;
    for (std::int64_t i = 0; i < a.slices[0].image.numel(); ++i)
        if (a.slices[0].image[i] != c.slices[0].image[i]) ++differing;
    CHECK(differing >= a.slices[0].image.numel() / 100);  // >= 1% of pixels
}

TEST_CASE("phantom slices are finite and normalized") {
    Dataset d = make_phantom_dataset(3, 64, 96, 21);
    for (const Slice& s : d.slices) {
        CHECK(s.image.all_finite());
        CHECK(oracle_p95({s}) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(d.normalization_scale.count(s.subject_id) == 1);
    }
    CHECK_THROWS_AS((void)make_phantom_dataset(0, 64, 64, 1), Error);
    CHECK_THROWS_AS((void)make_phantom_dataset(1, 32, 64, 1), Error);
}

TEST_CASE("extract_random_patches: count, bounds, determinism") {
    Slice s = make_slice(random_cimage(320, 320, 9));
    auto patches = extract_random_patches(s, 80, 60, 3);
    REQUIRE(patches.size() == 80);
    for (const Patch& p : patches) {
        CHECK(p.row >= 0);
        CHECK(p.col >= 0);
        CHECK(p.row <= 260);
        CHECK(p.col <= 260);
        CHECK(p.size() == 60);
        CHECK(p.pixels[0] == s.image[static_cast<std::int64_t>(p.row) * 320 + p.col]);
    }
    auto again = extract_random_patches(s, 80, 60, 3);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        CHECK(patches[i].row == again[i].row);
        CHECK(patches[i].col == again[i].col);
    }
}

TEST_CASE("extract_random_patches: full-size patch has the single valid origin") {
    Slice s = make_slice(random_cimage(48, 48, 11));
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
        auto ps = extract_random_patches(s, 3, 48, seed);
        for (const Patch& p : ps) {
            CHECK(p.row == 0);
            CHECK(p.col == 0);
        }
    }
    CHECK_THROWS_AS((void)extract_random_patches(s, 1, 49, 0), Error);
}

TEST_CASE("extract_random_patches: origin rows are approximately uniform") {
    Slice s = make_slice(random_cimage(64, 64, 13));
    const int size = 15;  // valid origins 0..49
    const int draws = 10000;
    auto ps = extract_random_patches(s, draws, size, 17);
    const int bins = 10, span = 50;
    std::vector<int> hist(bins, 0);
    for (const Patch& p : ps) ++hist[static_cast<std::size_t>(p.row * bins / span)];
    double chi2 = 0;
    const double expect = static_cast<double>(draws) / bins;
    for (int b = 0; b < bins; ++b) chi2 += (hist[b] - expect) * (hist[b] - expect) / expect;
    CHECK(chi2 < 21.666);  // chi-square, 9 dof, alpha = 0.01
}

TEST_CASE("extract_grid_patches: counting, tiling, shifts") {
    CTensor img = random_cimage(64, 64, 19);
    auto grid = extract_grid_patches(img, 40, 5, {0, 0});
    CHECK(grid.size() == 25);  // floor((64-40)/5)+1 = 5 per axis

    auto tiles = extract_grid_patches(img, 16, 16, {0, 0});
    CHECK(tiles.size() == 16);
    std::set<std::pair<int, int>> origins;
    for (const Patch& p : tiles) {
        CHECK(p.row % 16 == 0);
        CHECK(p.col % 16 == 0);
        origins.insert({p.row, p.col});
    }
    CHECK(origins.size() == 16);

    auto base = extract_grid_patches(img, 40, 5, {0, 0});
    auto shifted = extract_grid_patches(img, 40, 5, {3, 3});
    REQUIRE(!shifted.empty());
    const int nj_b = grid_count_1d(64, 40, 5, 0);
    const int nj_s = grid_count_1d(64, 40, 5, 3);
    for (std::size_t i = 0; i < shifted.size(); ++i) {
        const int bi = static_cast<int>(i) / nj_s, bj = static_cast<int>(i) % nj_s;
        const Patch& pb = base[static_cast<std::size_t>(bi * nj_b + bj)];
        CHECK(shifted[i].row == pb.row + 3);
        CHECK(shifted[i].col == pb.col + 3);
    }
}

TEST_CASE("grid completeness: every pixel before the last covered row is hit") {
    CTensor img = random_cimage(64, 64, 23);
    const int size = 12, stride = 5;
    auto grid = extract_grid_patches(img, size, stride, {0, 0});
    std::vector<int> cover(64 * 64, 0);
    int last_origin = 0;
    for (const Patch& p : grid) {
        last_origin = std::max(last_origin, p.row);
        CHECK(p.row + size <= 64);
        CHECK(p.col + size <= 64);
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) ++cover[static_cast<std::size_t>((p.row + r) * 64 + p.col + c)];
    }
    for (int r = 0; r < last_origin + size; ++r)
        for (int c = 0; c < last_origin + size; ++c) CHECK(cover[static_cast<std::size_t>(r * 64 + c)] >= 1);
    CHECK_THROWS_AS((void)extract_grid_patches(img, 40, 5, {5, 0}), Error);
}

TEST_CASE("grid patch count matches the counting helper across shapes") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = rng.uniform_int(20, 70), w = rng.uniform_int(20, 70);
        const int size = rng.uniform_int(4, 18);
        const int stride = rng.uniform_int(1, 7);
        const int dr = rng.uniform_int(0, stride - 1), dc = rng.uniform_int(0, stride - 1);
        if (size > std::min(h, w)) continue;
        CTensor img = random_cimage(h, w, 100 + static_cast<std::uint64_t>(trial));
        auto grid = extract_grid_patches(img, size, stride, {dr, dc});
        CHECK(static_cast<int>(grid.size()) ==
              grid_count_1d(h, size, stride, dr) * grid_count_1d(w, size, stride, dc));
    }
}
