#pragma once

#include <cstdint>
#include <random>

namespace msat {

/// Seeded generator shared by every stochastic stage. Determinism is per
/// platform: distributions come from the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal(double stddev) { return std::normal_distribution<double>(0.0, stddev)(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace msat
