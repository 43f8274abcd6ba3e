#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ufmri/tensor.hpp"

namespace ufmri {

/// One fully-sampled complex 2D image.
struct Slice {
    CTensor image;             // [H, W]
    std::string contrast_tag;  // "PD" | "PDFS" | "synthetic"
    std::string subject_id;

    int height() const { return image.dim(0); }
    int width() const { return image.dim(1); }
};

struct Patch {
    CTensor pixels;  // [P, P]
    int row = 0, col = 0;
    std::string source_slice;

    int size() const { return pixels.dim(0); }
};

enum class Split { train, val, test };
std::string split_name(Split s);

struct Dataset {
    std::vector<Slice> slices;
    Split split = Split::train;
    std::map<std::string, double> normalization_scale;  // per subject
};

/// Linear-interpolation percentile of |values| in [0, 1].
double percentile(std::vector<double> values, double q);

struct NormalizedSubject {
    std::vector<Slice> slices;
    double scale;  // divisor applied to every pixel
};

/// Scales a subject's slices so the subject-wide 95th percentile of
/// magnitude equals 1. Rejects all-zero subjects.
NormalizedSubject normalize_subject(const std::vector<Slice>& slices);

/// Deterministic synthetic slices: random ellipses + band-limited texture +
/// smooth polynomial phase, normalized per subject. Stand-in for fully
/// sampled acquisitions at desk scale.
Dataset make_phantom_dataset(int count, int height, int width, std::uint64_t seed,
                             Split split = Split::train);

std::vector<Patch> extract_random_patches(const Slice& slice, int count, int size, std::uint64_t seed);

/// Patches at origins (dr + i*stride, dc + j*stride), row-major, patches that
/// would cross the border are dropped.
std::vector<Patch> extract_grid_patches(const CTensor& image, int size, int stride,
                                        std::pair<int, int> shift);

/// Number of grid patches per axis for extract_grid_patches.
int grid_count_1d(int extent, int size, int stride, int shift);

void save_dataset(const Dataset& ds, const std::string& path,
                  const std::map<std::string, std::string>& meta = {});
Dataset load_dataset(const std::string& path);

/// Real-data ingestion: named-array container with "kspace" (complex64
/// [N, C, H, W]) and optional "maps" (same shape). Targets are the
/// coil-combined inverse transforms of the fully sampled k-space.
struct RealArchive {
    std::vector<CTensor> kspace;  // per slice [C, H, W]
    std::vector<CTensor> maps;    // empty if absent
};
RealArchive load_real_archive(const std::string& path);

} // namespace ufmri
