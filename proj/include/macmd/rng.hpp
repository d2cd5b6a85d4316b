#pragma once

#include <cmath>
#include <cstdint>

namespace macmd {

/// Counter-based deterministic generator. Every draw is a pure function of
/// (seed, draw index), so value i is reproducible no matter what other code
/// draws in between: callers that need an independent stream just construct
/// a new instance with a derived seed.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
        // splitmix64 finalizer over a Weyl-offset combination
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() { return mix(seed_, counter_++); }

    std::uint64_t at_u64(std::uint64_t index) const { return mix(seed_, index); }

    /// Uniform in (0,1); never exactly 0 or 1 so log()/logit() stay finite.
    double next_double() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    /// Integer in [0, bound). Pure modular reduction: platform independent.
    std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double next_normal() {
        const double u1 = next_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace macmd
