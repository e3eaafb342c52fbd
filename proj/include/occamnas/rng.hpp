#pragma once

// Deterministic RNG used everywhere a seed matters. splitmix64 has a fully
// specified output sequence, so runs reproduce bit-for-bit across platforms
// and standard-library versions, which std::uniform_* distributions do not
// guarantee. Stream keys derive sub-generators (per candidate, per epoch,
// per sample) without correlation between streams.

#include <cstdint>
#include <vector>

namespace occamnas {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n); n >= 1. Modulo bias is < 2^-52 for any
    // realistic n here.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    bool bernoulli(double p) { return next_double() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[next_below(i)]);
    }

private:
    std::uint64_t state_;
};

// Order-sensitive seed mixing (mix(a, b) != mix(b, a)).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    Rng r(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
    return r.next_u64();
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
    return mix_seed(mix_seed(a, b, c), d);
}

} // namespace occamnas
