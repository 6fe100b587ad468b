#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace syncmask {

// SplitMix64 finalizer. Used for seeding and for deriving child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Child seed for (parent, key). Seeds form a tree: run -> epoch -> batch -> pair,
// so the stream a pair sees does not depend on how work is scheduled.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t key) {
    return splitmix64(parent ^ splitmix64(key + 0x632BE59BD9B4E019ULL));
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

// xoshiro256** with distribution helpers implemented here rather than via
// <random> distributions, whose outputs differ between standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }
    Rng derive(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }
    Rng derive(std::string_view label) const { return Rng(derive_seed(seed_, label)); }

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    // Standard normal via Box-Muller (one value per call, no caching).
    double normal();

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
};

}  // namespace syncmask
