#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "ufmri/common.hpp"

namespace ufmri {

/// Dense real array, row-major, double precision.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> data);

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, double value);
    static Tensor scalar(double value);

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double& operator[](std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return v[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

std::int64_t shape_numel(const std::vector<int>& s);
std::string shape_str(const std::vector<int>& s);

/// Dense complex array, row-major.
struct CTensor {
    std::vector<int> shape;
    std::vector<cplx> v;

    CTensor() = default;
    CTensor(std::vector<int> s, std::vector<cplx> data);

    static CTensor zeros(std::vector<int> s);

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    cplx& operator[](std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
    cplx operator[](std::int64_t i) const { return v[static_cast<std::size_t>(i)]; }

    bool same_shape(const CTensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

double norm2(const CTensor& a);
double norm2(const Tensor& a);

/// Re(<a, b>) with the complex inner product conj(a)*b summed.
double dot_real(const CTensor& a, const CTensor& b);
cplx dot_cplx(const CTensor& a, const CTensor& b);

/// Complex array <-> stacked-plane real tensor [2, ...] (plane 0 real, plane 1 imag).
Tensor to_planes(const CTensor& c);
CTensor from_planes(const Tensor& t);

} // namespace ufmri
