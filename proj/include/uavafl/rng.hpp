#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace uavafl {

// splitmix64 finalizer. Also used as a stateless hash so that parallel
// workers can derive independent streams without sharing engine state.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return mix64(seed ^ (v + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2)));
}

// FNV-1a over a label, for expanding one top-level seed into named substreams
// (scenario, phases, noise, trials, ...).
inline std::uint64_t substream_seed(std::uint64_t top_seed, std::string_view name) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return hash_combine(top_seed, h);
}

// Small deterministic engine (splitmix64 sequence). Portable across
// platforms and independent of libstdc++ distribution internals, so runs
// are bit-identical wherever the binary goes.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() { return mix64(state_++); }

    // Uniform in the open interval (0, 1); never returns 0 or 1 so it can
    // feed log() in Box-Muller directly.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Standard normal via Box-Muller; the pair is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace uavafl
