#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ufmri {

using cplx = std::complex<double>;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

} // namespace ufmri

#define UFMRI_CHECK(cond, msg)                   \
    do {                                         \
        if (!(cond)) ::ufmri::fail(msg);         \
    } while (0)
