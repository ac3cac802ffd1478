#pragma once

#include <cmath>
#include <cstdint>

namespace commlearn {

// Deterministic xoshiro256++ generator seeded through splitmix64.
// All distribution transforms are implemented here rather than through
// <random> so that a (seed, stream) pair produces the same draws on any
// platform and standard library.
class Rng {
public:
    Rng() : Rng(0) {}

    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1), safe as a log argument
    double uniform_open() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Unbiased enough for any n we use (bias < n / 2^64).
    int uniform_int(int n) {
        return int((__uint128_t(next_u64()) * __uint128_t(n)) >> 64);
    }

    // Box-Muller; one value per call, partner discarded.
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double sigma) { return sigma * normal(); }

    // Gumbel(0,1) by inverse transform.
    double gumbel() { return -std::log(-std::log(uniform_open())); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// Named substreams so env draws, exploration, discretizer noise and the
// channel each advance independently of one another.
enum class Stream : uint64_t {
    ParamInit = 1,
    Env = 2,
    Explore = 3,
    Discretizer = 4,
    Channel = 5,
    EvalEnv = 6,
    EvalDiscretizer = 7,
    EvalChannel = 8,
    Protocol = 9,
};

inline Rng derive_rng(uint64_t root_seed, Stream stream, uint64_t salt = 0) {
    uint64_t x = root_seed;
    uint64_t a = Rng::splitmix64(x);
    uint64_t y = static_cast<uint64_t>(stream) * 0x9e3779b97f4a7c15ull + 0x7f4a7c15ull;
    uint64_t b = Rng::splitmix64(y);
    uint64_t z = salt ^ 0xd1b54a32d192ed03ull;
    uint64_t c = Rng::splitmix64(z);
    return Rng(a ^ b ^ c);
}

} // namespace commlearn
