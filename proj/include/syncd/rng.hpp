#ifndef SYNCD_RNG_HPP
#define SYNCD_RNG_HPP

#include <cstdint>

namespace syncd {

// Counter-based deterministic generator. Each draw hashes (seed, counter) with
// the splitmix64 finalizer, so identical seed + call sequence reproduces the
// same stream on every platform and parallel workers can seed-split cheaply.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (both draws consumed, one cached).
    double normal();

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n);

    // Independent child stream; deterministic in (seed, stream index).
    Rng split(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace syncd

#endif
