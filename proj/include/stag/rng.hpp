#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace stag {

// Counter-based splittable random stream. Every draw is a pure function of
// (master_seed, stream_label, counter), so identical triples reproduce
// identical values and distinct labels give independent sequences. Streams
// can be derived freely for parallel pipelines without shared state.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, const std::string& label, std::uint64_t counter = 0)
        : master_seed_(master_seed), label_hash_(fnv1a(label)), counter_(counter) {}

    // New stream whose label is "<this label>/<suffix>"; implemented by
    // mixing hashes so labels never need concatenation at draw time.
    RngStream derive(const std::string& suffix) const {
        RngStream s = *this;
        s.label_hash_ = mix(s.label_hash_, fnv1a(suffix));
        s.counter_ = 0;
        return s;
    }

    std::uint64_t next_u64() {
        std::uint64_t x = mix(mix(master_seed_, label_hash_), counter_++);
        return x;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // Standard normal via Box-Muller; consumes two draws.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    static std::uint64_t fnv1a(const std::string& s) {
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    // splitmix64-style finalizer applied to a combined key.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t master_seed_;
    std::uint64_t label_hash_;
    std::uint64_t counter_;
};

}  // namespace stag
