#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dsc {

/// splitmix64 finalizer; used to derive independent streams.
std::uint64_t mix64(std::uint64_t x);

/// Derive a stream seed from a master seed and a list of coordinates
/// (config id, grid cell, worker index...). Order-sensitive.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords);

/// Explicit random stream. There is no global random state anywhere in the
/// library; every stochastic operation takes one of these by reference.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double stddev) { return std::normal_distribution<double>(0.0, stddev)(engine_); }
    /// Standard Gumbel sample, -log(-log(u)) with u in the open unit interval.
    double gumbel();
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t index(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace dsc
