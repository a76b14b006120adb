#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace dpcvqa {

// splitmix64 stream. Used instead of <random> engines/distributions so that
// every generated byte is stable across standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Box-Muller; the log argument is kept in (0, 1].
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.28318530717958647692 * u2);
    }

    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<size_t>(below(i))]);
        }
    }

private:
    uint64_t state_;
};

inline uint64_t hash_label(std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Labeled sub-seed: one user-facing seed fans out into independent,
// reproducible streams (split/init/train/...).
inline uint64_t derive_seed(uint64_t seed, std::string_view label,
                            uint64_t index = 0) {
    Rng r(seed ^ hash_label(label) ^ (index * 0x9e3779b97f4a7c15ull));
    return r.next_u64();
}

}  // namespace dpcvqa
