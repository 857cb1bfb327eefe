#ifndef ODI_RNG_HPP
#define ODI_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace odi {

// Deterministic RNG used everywhere. Doubles are produced from the top 53
// bits of the engine output so the stream does not depend on the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + uniform() * (hi - lo);
    }

    // Uniform integer in [0, n). n == 0 yields 0. Always consumes one draw.
    int uniform_int(int n) {
        double u = uniform();
        if (n <= 0) return 0;
        int v = static_cast<int>(u * n);
        return v < n ? v : n - 1;
    }

private:
    std::mt19937_64 eng_;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Seed for a per-image job: hash(global_seed, image_id).
inline uint64_t derive_seed(uint64_t global_seed, std::string_view id) {
    return splitmix64(global_seed ^ splitmix64(fnv1a64(id)));
}

} // namespace odi

#endif
