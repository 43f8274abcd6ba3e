#include "ufmri/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace ufmri {

std::int64_t shape_numel(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
        UFMRI_CHECK(d >= 0, "negative dimension in shape");
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
    UFMRI_CHECK(shape_numel(shape) == static_cast<std::int64_t>(v.size()),
                "tensor data size does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> s) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> s, double value) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

CTensor::CTensor(std::vector<int> s, std::vector<cplx> data) : shape(std::move(s)), v(std::move(data)) {
    UFMRI_CHECK(shape_numel(shape) == static_cast<std::int64_t>(v.size()),
                "ctensor data size does not match shape " + shape_str(shape));
}

CTensor CTensor::zeros(std::vector<int> s) {
    auto n = shape_numel(s);
    return CTensor(std::move(s), std::vector<cplx>(static_cast<std::size_t>(n), cplx(0, 0)));
}

bool CTensor::all_finite() const {
    for (const cplx& x : v)
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    return true;
}

double norm2(const CTensor& a) {
    double s = 0;
    for (const cplx& x : a.v) s += std::norm(x);
    return std::sqrt(s);
}

double norm2(const Tensor& a) {
    double s = 0;
    for (double x : a.v) s += x * x;
    return std::sqrt(s);
}

double dot_real(const CTensor& a, const CTensor& b) {
    UFMRI_CHECK(a.same_shape(b), "dot_real shape mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        s += a.v[i].real() * b.v[i].real() + a.v[i].imag() * b.v[i].imag();
    return s;
}

cplx dot_cplx(const CTensor& a, const CTensor& b) {
    UFMRI_CHECK(a.same_shape(b), "dot_cplx shape mismatch");
    cplx s(0, 0);
    for (std::size_t i = 0; i < a.v.size(); ++i) s += std::conj(a.v[i]) * b.v[i];
    return s;
}

Tensor to_planes(const CTensor& c) {
    std::vector<int> s;
    s.push_back(2);
    for (int d : c.shape) s.push_back(d);
    Tensor t = Tensor::zeros(s);
    const auto n = c.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        t[i] = c[i].real();
        t[i + n] = c[i].imag();
    }
    return t;
}

CTensor from_planes(const Tensor& t) {
    UFMRI_CHECK(t.ndim() >= 2 && t.shape[0] == 2, "expected [2, ...] plane tensor, got " + shape_str(t.shape));
    std::vector<int> s(t.shape.begin() + 1, t.shape.end());
    CTensor c = CTensor::zeros(s);
    const auto n = c.numel();
    for (std::int64_t i = 0; i < n; ++i) c[i] = cplx(t[i], t[i + n]);
    return c;
}

} // namespace ufmri
