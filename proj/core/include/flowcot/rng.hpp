#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "flowcot/errors.hpp"

namespace flowcot {

// splitmix64; used to mix seeds for named sub-streams.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_name(std::string_view name) {
    // FNV-1a 64
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Seed for a named sub-stream: all randomness in the project flows from one
// root seed through these, so components re-seed independently and
// deterministically.
inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = mix64(root ^ hash_name(name));
    s = mix64(s ^ a);
    s = mix64(s ^ b);
    return s;
}

// mt19937_64 with hand-rolled distributions. The std:: distribution objects
// are implementation-defined, so sampling goes through these helpers to keep
// output byte-stable across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] inclusive.
    int next_int(int lo, int hi) {
        if (hi < lo) throw DataError("Rng::next_int: empty range");
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    // Index sampled proportionally to probs (need not be normalized).
    std::size_t categorical(std::span<const double> probs) {
        double total = 0.0;
        for (double p : probs) total += p;
        if (!(total > 0.0)) throw NumericError("categorical: non-positive total mass");
        double u = next_double() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return probs.size() - 1;
    }

    double next_normal() {
        // Box-Muller, one value per call
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Marsaglia-Tsang; valid for any shape > 0.
    double next_gamma(double shape) {
        if (!(shape > 0.0)) throw DataError("next_gamma: shape must be > 0");
        if (shape < 1.0) {
            const double u = next_double();
            return next_gamma(shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = next_normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = next_double();
            if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
            if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> next_dirichlet(std::size_t dim, double concentration) {
        std::vector<double> out(dim);
        double total = 0.0;
        for (auto& g : out) {
            g = next_gamma(concentration);
            total += g;
        }
        if (!(total > 0.0)) total = 1.0;
        for (auto& g : out) g /= total;
        return out;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace flowcot
