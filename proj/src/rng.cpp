#include "endodyn/rng.hpp"

#include "endodyn/errors.hpp"

#include <array>
#include <limits>

namespace endodyn {

int RandomStream::uniform_int(int n) {
    if (n <= 0) throw InvalidArgument("uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % un;
    for (;;) {
        const std::uint64_t r = gen_();
        if (r < limit) return static_cast<int>(r % un);
    }
}

int RandomStream::discrete(std::span<const double> weights) {
    if (weights.empty()) throw InvalidArgument("discrete: empty weight vector");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw InvalidArgument("discrete: negative or NaN weight");
        total += w;
    }
    if (!(total > 0.0)) throw InvalidArgument("discrete: weights sum to zero");
    const double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h) {
    for (unsigned char b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t SeedSpec::child_seed(std::string_view label) const {
    std::array<unsigned char, 9> head{};
    for (int i = 0; i < 8; ++i) {
        head[static_cast<std::size_t>(i)] =
            static_cast<unsigned char>((master_seed >> (8 * i)) & 0xFF);
    }
    head[8] = 0x1F;
    std::uint64_t h = fnv1a64(head);
    h = fnv1a64({reinterpret_cast<const unsigned char*>(label.data()), label.size()}, h);
    return h;
}

}  // namespace endodyn
