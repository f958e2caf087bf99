#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace razor {

// Deterministic counter-free PRNG. All randomness in the project flows from
// one master seed through named streams ("init", "data", "noise", ...), so
// adding a consumer to one stream never shifts the draws of another.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // Warm up so that small seeds do not produce correlated openings.
        next_u64();
        next_u64();
    }

    static Rng stream(uint64_t master_seed, std::string_view name) {
        // FNV-1a over the stream name, mixed with the master seed.
        uint64_t h = 14695981039346656037ull;
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return Rng(master_seed ^ h);
    }

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace razor
