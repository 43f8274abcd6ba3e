#include "ufmri/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ufmri/container.hpp"
#include "ufmri/fft.hpp"
#include "ufmri/rng.hpp"

namespace ufmri {

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

double percentile(std::vector<double> values, double q) {
    UFMRI_CHECK(!values.empty(), "percentile of empty set");
    UFMRI_CHECK(q >= 0.0 && q <= 1.0, "percentile q out of range");
    std::sort(values.begin(), values.end());
    const double rank = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

NormalizedSubject normalize_subject(const std::vector<Slice>& slices) {
    UFMRI_CHECK(!slices.empty(), "normalize_subject: no slices");
    std::vector<double> mags;
    for (const Slice& s : slices) {
        mags.reserve(mags.size() + s.image.v.size());
        for (const cplx& p : s.image.v) mags.push_back(std::abs(p));
    }
    const double p95 = percentile(std::move(mags), 0.95);
    UFMRI_CHECK(p95 > 0.0, "normalize_subject: degenerate all-zero subject");
    NormalizedSubject out;
    out.scale = p95;
    out.slices = slices;
    for (Slice& s : out.slices)
        for (cplx& p : s.image.v) p /= p95;
    return out;
}

namespace {

// One phantom: 3-8 ellipses, low-pass texture inside the support, smooth
// quadratic phase.
CTensor render_phantom(int h, int w, Rng& rng) {
    Tensor mag = Tensor::zeros({h, w});
    const int n_ell = rng.uniform_int(3, 8);
    const double scale = static_cast<double>(std::min(h, w));
    for (int e = 0; e < n_ell; ++e) {
        const double cy = rng.uniform(0.18, 0.82) * h;
        const double cx = rng.uniform(0.18, 0.82) * w;
        const double a = rng.uniform(0.08, 0.38) * scale;
        const double b = rng.uniform(0.08, 0.38) * scale;
        const double th = rng.uniform(0.0, 3.14159265358979323846);
        const double amp = rng.uniform(0.25, 1.0);
        const double ct = std::cos(th), st = std::sin(th);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const double dy = r - cy, dx = c - cx;
                const double u = (ct * dx + st * dy) / a;
                const double v = (-st * dx + ct * dy) / b;
                if (u * u + v * v <= 1.0) mag[static_cast<std::int64_t>(r) * w + c] += amp;
            }
        }
    }

    // Band-limited texture: white noise low-passed with a Gaussian window in
    // k-space, kept inside the object support.
    CTensor noise = CTensor::zeros({h, w});
    for (cplx& p : noise.v) p = cplx(rng.normal(), rng.normal());
    CTensor spec = fft2c(noise);
    const double sigma = 0.14 * std::min(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double fy = r - h / 2, fx = c - w / 2;
            spec[static_cast<std::int64_t>(r) * w + c] *=
                std::exp(-(fy * fy + fx * fx) / (2 * sigma * sigma));
        }
    CTensor tex = ifft2c(spec);
    double tex_rms = 0;
    for (const cplx& p : tex.v) tex_rms += std::norm(p);
    tex_rms = std::sqrt(tex_rms / static_cast<double>(tex.numel()));
    const double tex_amp = rng.uniform(0.05, 0.18);

    // Smooth quadratic phase over [-1, 1]^2 coordinates.
    double coef[6];
    for (double& c : coef) c = rng.uniform(-1.2, 1.2);

    CTensor img = CTensor::zeros({h, w});
    for (int r = 0; r < h; ++r) {
        const double y = 2.0 * r / (h - 1) - 1.0;
        for (int c = 0; c < w; ++c) {
            const double x = 2.0 * c / (w - 1) - 1.0;
            const std::int64_t i = static_cast<std::int64_t>(r) * w + c;
            double m = mag[i];
            if (m > 0 && tex_rms > 0) m += tex_amp * tex[i].real() / tex_rms;
            if (m < 0) m = 0;
            const double ph = coef[0] + coef[1] * x + coef[2] * y + coef[3] * x * x +
                              coef[4] * x * y + coef[5] * y * y;
            img[i] = m * cplx(std::cos(ph), std::sin(ph));
        }
    }
    return img;
}

} // namespace

Dataset make_phantom_dataset(int count, int height, int width, std::uint64_t seed, Split split) {
    UFMRI_CHECK(count >= 1, "make_phantom_dataset: count must be >= 1");
    UFMRI_CHECK(height >= 64 && width >= 64, "make_phantom_dataset: shape must be >= 64x64");
    Dataset ds;
    ds.split = split;
    ds.slices.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Slice s;
        s.image = render_phantom(height, width, rng);
        s.contrast_tag = "synthetic";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%05d", split_name(split).c_str(), i);
        s.subject_id = buf;
        UFMRI_CHECK(s.image.all_finite(), "phantom produced non-finite values");
        NormalizedSubject norm = normalize_subject({s});
        ds.slices.push_back(std::move(norm.slices[0]));
        ds.normalization_scale[ds.slices.back().subject_id] = norm.scale;
    }
    return ds;
}

std::vector<Patch> extract_random_patches(const Slice& slice, int count, int size, std::uint64_t seed) {
    const int h = slice.height(), w = slice.width();
    UFMRI_CHECK(size >= 1 && size <= std::min(h, w), "extract_random_patches: patch size too large");
    Rng rng(seed);
    std::vector<Patch> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Patch p;
        p.row = rng.uniform_int(0, h - size);
        p.col = rng.uniform_int(0, w - size);
        p.source_slice = slice.subject_id;
        p.pixels = CTensor::zeros({size, size});
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c)
                p.pixels[static_cast<std::int64_t>(r) * size + c] =
                    slice.image[static_cast<std::int64_t>(p.row + r) * w + (p.col + c)];
        out.push_back(std::move(p));
    }
    return out;
}

int grid_count_1d(int extent, int size, int stride, int shift) {
    if (shift + size > extent) return 0;
    return (extent - shift - size) / stride + 1;
}

std::vector<Patch> extract_grid_patches(const CTensor& image, int size, int stride,
                                        std::pair<int, int> shift) {
    UFMRI_CHECK(image.ndim() == 2, "extract_grid_patches expects a 2D image");
    const int h = image.dim(0), w = image.dim(1);
    const auto [dr, dc] = shift;
    UFMRI_CHECK(stride >= 1, "extract_grid_patches: stride must be >= 1");
    UFMRI_CHECK(dr >= 0 && dr < stride && dc >= 0 && dc < stride,
                "extract_grid_patches: shift must lie in [0, stride)");
    UFMRI_CHECK(size <= std::min(h, w), "extract_grid_patches: patch size too large");
    const int ni = grid_count_1d(h, size, stride, dr);
    const int nj = grid_count_1d(w, size, stride, dc);
    std::vector<Patch> out;
    out.reserve(static_cast<std::size_t>(ni) * nj);
    for (int i = 0; i < ni; ++i) {
        for (int j = 0; j < nj; ++j) {
            Patch p;
            p.row = dr + i * stride;
            p.col = dc + j * stride;
            p.pixels = CTensor::zeros({size, size});
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c)
                    p.pixels[static_cast<std::int64_t>(r) * size + c] =
                        image[static_cast<std::int64_t>(p.row + r) * w + (p.col + c)];
            out.push_back(std::move(p));
        }
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path,
                  const std::map<std::string, std::string>& meta) {
    UFMRI_CHECK(!ds.slices.empty(), "save_dataset: empty dataset");
    const int n = static_cast<int>(ds.slices.size());
    const int h = ds.slices[0].height(), w = ds.slices[0].width();
    CTensor stack = CTensor::zeros({n, h, w});
    std::vector<std::string> contrast, subject;
    for (int i = 0; i < n; ++i) {
        const Slice& s = ds.slices[static_cast<std::size_t>(i)];
        UFMRI_CHECK(s.height() == h && s.width() == w, "save_dataset: inconsistent slice shapes");
        std::copy(s.image.v.begin(), s.image.v.end(),
                  stack.v.begin() + static_cast<std::ptrdiff_t>(i) * h * w);
        contrast.push_back(s.contrast_tag);
        subject.push_back(s.subject_id);
    }
    NamedArrays na;
    na.put_ctensor("image", stack);
    na.put_str("contrast", contrast);
    na.put_str("subject", subject);
    std::vector<std::string> subj_keys;
    std::vector<double> scales;
    for (const auto& [k, v] : ds.normalization_scale) {
        subj_keys.push_back(k);
        scales.push_back(v);
    }
    na.put_str("scale_subject", subj_keys);
    na.put_f8("scale_value", {static_cast<int>(scales.size())}, scales.data());
    na.meta = meta;
    na.meta["split"] = split_name(ds.split);
    na.save(path);
}

Dataset load_dataset(const std::string& path) {
    NamedArrays na = NamedArrays::load(path);
    CTensor stack = na.get_ctensor("image");
    UFMRI_CHECK(stack.ndim() == 3, "dataset image array must be [N, H, W]");
    const auto& contrast = na.get_str("contrast");
    const auto& subject = na.get_str("subject");
    const int n = stack.dim(0), h = stack.dim(1), w = stack.dim(2);
    UFMRI_CHECK(static_cast<int>(contrast.size()) == n && static_cast<int>(subject.size()) == n,
                "dataset label arrays do not match slice count");
    Dataset ds;
    auto it = na.meta.find("split");
    if (it != na.meta.end()) {
        if (it->second == "val") ds.split = Split::val;
        else if (it->second == "test") ds.split = Split::test;
        else ds.split = Split::train;
    }
    for (int i = 0; i < n; ++i) {
        Slice s;
        s.image = CTensor::zeros({h, w});
        std::copy(stack.v.begin() + static_cast<std::ptrdiff_t>(i) * h * w,
                  stack.v.begin() + static_cast<std::ptrdiff_t>(i + 1) * h * w, s.image.v.begin());
        s.contrast_tag = contrast[static_cast<std::size_t>(i)];
        s.subject_id = subject[static_cast<std::size_t>(i)];
        ds.slices.push_back(std::move(s));
    }
    if (na.has("scale_subject")) {
        const auto& keys = na.get_str("scale_subject");
        Tensor vals = na.get_tensor("scale_value");
        for (std::size_t i = 0; i < keys.size(); ++i) ds.normalization_scale[keys[i]] = vals[static_cast<std::int64_t>(i)];
    }
    return ds;
}

RealArchive load_real_archive(const std::string& path) {
    NamedArrays na = NamedArrays::load(path);
    CTensor ks = na.get_ctensor("kspace");
    UFMRI_CHECK(ks.ndim() == 4, "real archive kspace must be [N, C, H, W]");
    const int n = ks.dim(0), c = ks.dim(1), h = ks.dim(2), w = ks.dim(3);
    RealArchive ar;
    for (int i = 0; i < n; ++i) {
        CTensor one = CTensor::zeros({c, h, w});
        std::copy(ks.v.begin() + static_cast<std::ptrdiff_t>(i) * c * h * w,
                  ks.v.begin() + static_cast<std::ptrdiff_t>(i + 1) * c * h * w, one.v.begin());
        ar.kspace.push_back(std::move(one));
    }
    if (na.has("maps")) {
        CTensor mp = na.get_ctensor("maps");
        UFMRI_CHECK(mp.shape == ks.shape, "real archive maps must match kspace shape");
        for (int i = 0; i < n; ++i) {
            CTensor one = CTensor::zeros({c, h, w});
            std::copy(mp.v.begin() + static_cast<std::ptrdiff_t>(i) * c * h * w,
                      mp.v.begin() + static_cast<std::ptrdiff_t>(i + 1) * c * h * w, one.v.begin());
            ar.maps.push_back(std::move(one));
        }
    }
    return ar;
}

} // namespace ufmri
