#pragma once

#include <cstdint>
#include <random>

#include "ufmri/tensor.hpp"

namespace ufmri {

/// splitmix64 mix; used to derive independent child seeds from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Seeded RNG wrapper. All randomness in the library flows through this so
/// that every operation is reproducible bit-for-bit for a fixed seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    /// Inclusive on both ends.
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }

    void fill_normal(Tensor& t, double stddev = 1.0) {
        for (double& x : t.v) x = stddev * normal();
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

} // namespace ufmri
