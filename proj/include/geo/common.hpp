#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace geo {

// Thrown for anything caused by bad input data (files, manifests, shapes).
// The CLI maps these to exit code 2; programming errors stay as assertions.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Seeded RNG wrapper. std::mt19937_64 output is pinned by the standard;
// the distributions below avoid std::uniform_* whose results are
// implementation defined, so every draw is reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    // uniform double in [0,1), 53 bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0,n); modulo bias is irrelevant at our scales
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }

    // Fisher-Yates using the deterministic draws above
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// FNV-1a over raw bytes, used for input digests in provenance records.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

// Shortest decimal that round-trips a double bit-exactly (17 significant
// digits always suffice). All text outputs funnel through this.
std::string format_double(double v);

} // namespace geo
