#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace endodyn {

// Deterministic random stream with portable output. The mt19937_64 core and
// the transforms below are fully pinned down, so the same seed produces the
// same draws on every platform (std::*_distribution is implementation-defined
// and deliberately avoided).
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform on [lo,hi); result clamped into the closed interval.
    double uniform(double lo, double hi) {
        double v = lo + (hi - lo) * next_double();
        if (v < lo) v = lo;
        if (v > hi) v = hi;
        return v;
    }

    // Uniform on {0,...,n-1}, unbiased via rejection.
    int uniform_int(int n);

    bool bernoulli(double p) { return next_double() < p; }

    // Index sampled proportionally to the given nonnegative weights.
    int discrete(std::span<const double> weights);

private:
    std::mt19937_64 gen_;
};

// Master seed plus labeled child-stream derivation.
//
// child_seed(label) = FNV-1a 64-bit hash over the 8 little-endian bytes of
// master_seed, a 0x1F separator byte, and the label bytes. Identical
// (master_seed, label) pairs always give identical streams; distinct labels
// give unrelated streams. Labels are namespaced by the engine as
// "traj/<replica>", "resample/<step>/<sample>", "absprob/<step>/<future>".
struct SeedSpec {
    std::uint64_t master_seed = 0;

    std::uint64_t child_seed(std::string_view label) const;
    RandomStream child_stream(std::string_view label) const {
        return RandomStream(child_seed(label));
    }
};

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace endodyn
