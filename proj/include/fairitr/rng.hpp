// Copyright 2026 the fairitr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>

namespace fairitr {

/// Seed wrapper for all randomized operations. Same seed + same parameters
/// means bit-identical output, independent of call order elsewhere.
struct RngSeed {
    std::uint64_t value = 0;
};

namespace detail {

// splitmix64 finalizer (Steele, Lea, Flood 2014). Full-avalanche mixing of a
// 64-bit word; the basis of the counter scheme below.
inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// FNV-1a over raw bytes; used to key per-point substreams.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

/// Counter-based deterministic generator with splittable substreams.
///
/// Draw k of stream with key K is mix64(K + k*gamma), so any draw is a pure
/// function of (key, counter): rows of a dataset can be generated from
/// independent substreams in any order, and repeated audits of the same
/// evaluation point replay the same jitters.
class Rng {
public:
    Rng() = default;
    explicit Rng(RngSeed seed) : key_(detail::mix64(seed.value ^ 0x6A09E667F3BCC909ULL)) {}
    explicit Rng(std::uint64_t raw_key) : key_(raw_key) {}

    /// Derive an independent stream; does not disturb this stream's counter.
    Rng substream(std::uint64_t tag) const {
        return Rng(detail::mix64(key_ + detail::mix64(tag ^ 0xBB67AE8584CAA73BULL)));
    }

    std::uint64_t next_u64() {
        counter_ += detail::golden_gamma;
        return detail::mix64(key_ + counter_);
    }

    /// Uniform on [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0,1), never returns an endpoint; feeds the inverse CDF.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via the inverse CDF applied to the uniform stream.
    double normal() { return normal_quantile(uniform_open()); }

    /// Inverse standard normal CDF (Wichura's AS 241, PPND16 variant);
    /// absolute error below 1e-15 on (0,1).
    static double normal_quantile(double p) {
        if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
        const double q = p - 0.5;
        if (std::abs(q) <= 0.425) {
            const double r = 0.180625 - q * q;
            return q *
                   (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                         6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                       1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                     1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
                   (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                         3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                       5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                     4.2313330701600911252e1) * r + 1.0);
        }
        double r = q < 0.0 ? p : 1.0 - p;
        r = std::sqrt(-std::log(r));
        double val;
        if (r <= 5.0) {
            r -= 1.6;
            val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                        2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                      3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                    4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
                  (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                        1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                      6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                    2.05319162663775882187e0) * r + 1.0);
        } else {
            r -= 5.0;
            val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                        1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                      2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                    5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
                  (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                        1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                      1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                    5.99832206555887937690e-1) * r + 1.0);
        }
        return q < 0.0 ? -val : val;
    }

private:
    std::uint64_t key_ = detail::mix64(0x6A09E667F3BCC909ULL);
    std::uint64_t counter_ = 0;
};

/// Stable 64-bit key for an evaluation point (x, s): hashes the IEEE bit
/// patterns, so identical doubles always map to the same substream.
inline std::uint64_t point_key(std::span<const double> x, int s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (double v : x) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = detail::fnv1a(&bits, sizeof bits, h);
    }
    std::uint64_t sb = static_cast<std::uint64_t>(s);
    return detail::fnv1a(&sb, sizeof sb, h);
}

} // namespace fairitr
