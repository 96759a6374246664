#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace clear {

/// 64-bit seeded generator used by every stochastic stage.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The distribution helpers below are written out explicitly
/// because the standard library distributions are implementation-defined,
/// and results must not depend on which C++ library built the binary.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    /// Standard normal via the Box-Muller transform (no cached second value).
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// Per-stage seed derived from a master seed: the stage name hash is mixed
/// into the master seed so independent stages draw from unrelated streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace clear
