#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace fatten {

// All randomness in the project flows from one master seed through named
// sub-streams, so each stage (data, init, shuffle, sampling, ...) is
// independently reproducible. Stream derivation mixes the master seed with
// the stream name and optional indices via splitmix64, then drives a
// mt19937_64. Uniform/normal draws are hand-rolled on top of the raw 64-bit
// output so the byte streams do not depend on the standard library's
// distribution implementations.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t stream_seed(uint64_t master, std::string_view name) {
    uint64_t h = splitmix64(master);
    for (char c : name)
        h = splitmix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    return h;
}

inline uint64_t stream_seed(uint64_t master, std::string_view name, uint64_t index) {
    return splitmix64(stream_seed(master, name) ^ index);
}

inline uint64_t stream_seed(uint64_t master, std::string_view name, uint64_t i, uint64_t j) {
    return splitmix64(stream_seed(master, name, i) ^ splitmix64(j));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; two uniforms per call, no cached spare.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        u1 = u1 > 0.0 ? u1 : 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 gen_;
};

} // namespace fatten
