#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>

namespace drift {

// SplitMix64 run in counter mode: the output sequence is a pure function of
// the 64-bit stream key, so every rollout, perturbation and shuffle replays
// bit-identically from its key alone. Substreams are derived by hashing a
// path of integers (run seed, prompt id, sample index, ...) into a key, which
// lets parallel rollouts draw from disjoint streams without coordination.
class Rng {
public:
    explicit Rng(uint64_t key) : state_(key) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. Draws two uniforms per call and keeps
    // one value; no cached state, so the draw count per call is fixed.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();  // log(0) guard, probability 2^-53
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
    }

private:
    uint64_t state_;
};

// Hash-combines a path of integers into a stream key.
inline uint64_t stream_key(std::initializer_list<uint64_t> path) {
    uint64_t h = 0x3c79ac492ba7b653ULL;
    for (uint64_t p : path) {
        h ^= p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        uint64_t z = h;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        h = z ^ (z >> 31);
    }
    return h;
}

// Stream tags keeping independent draw families apart under one run seed.
enum StreamTag : uint64_t {
    kStreamTrain = 1,
    kStreamEval = 2,
    kStreamPretrain = 3,
    kStreamInstanceGen = 4,
};

}  // namespace drift
