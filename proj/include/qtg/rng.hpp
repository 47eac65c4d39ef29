#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace qtg {

/// Self-contained xoshiro256** generator. Every random draw in the project
/// flows from one root seed through named substreams (data, init, masking,
/// shuffling), so individual components can be replayed in isolation and
/// results do not depend on the platform's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller (the spare draw is cached).
    double normal();
    double normal(double mean, double sigma);

    /// Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n);
    int range_int(int lo, int hi_exclusive);

    /// In-place Fisher-Yates shuffle of indices.
    void shuffle(std::vector<std::size_t>& idx);

    /// k distinct values from [0, n), ascending order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Deterministic 64-bit mix of (root seed, stream name, index).
std::uint64_t substream_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

inline Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    return Rng(substream_seed(root, name, index));
}

}  // namespace qtg
