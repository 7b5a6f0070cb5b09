#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fundus {

// FNV-1a, used to derive subsystem seeds from (seed, name) pairs and to
// fingerprint configs for checkpoints.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    return fnv1a64(std::string_view(buf, 8), h);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view subsystem) {
    return hash_combine(fnv1a64(subsystem), seed);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view subsystem, std::uint64_t salt) {
    return hash_combine(derive_seed(seed, subsystem), salt);
}

// splitmix64 generator. Deliberately not std::mt19937 + std::*_distribution:
// those leave the draw sequence up to the standard library, and the training
// pipeline promises bit-identical runs for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        // Lemire's multiply-shift; bias is negligible for our ranges.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool coin() { return (next_u64() & 1ull) != 0; }

    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace fundus
