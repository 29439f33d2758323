#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "circadia/core.hpp"
#include "circadia/math.hpp"

namespace circadia {

namespace detail {

// SplitMix64 finalizer; used to hash (seed, path) chains into stream identities.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Philox4x32-10 block function (Salmon et al. 2011 constants).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
               static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
               static_cast<std::uint32_t>(p0)};
        key[0] += w0;
        key[1] += w1;
    }
    return ctr;
}

} // namespace detail

/// Counter-based pseudo-random stream. A stream is a pure function of
/// (seed, path): identical identities produce identical draw sequences on any
/// platform or thread schedule, and distinct paths give unrelated Philox
/// (key, counter-prefix) pairs. Streams are value types; sampling advances
/// only the local counter, so each worker owns its own copy.
class RngStream {
public:
    RngStream() : RngStream(0, {}) {}

    RngStream(std::uint64_t seed, std::vector<std::uint64_t> path)
        : seed_(seed), path_(std::move(path)) {
        chain_ = seed_;
        for (std::uint64_t e : path_) chain_ = detail::mix64(chain_ ^ detail::mix64(e));
        reset_state();
    }

    std::uint64_t seed() const { return seed_; }
    const std::vector<std::uint64_t>& path() const { return path_; }

    /// Derive a substream by appending indices to this stream's path.
    RngStream child(std::initializer_list<std::uint64_t> suffix) const {
        return child(std::span<const std::uint64_t>(suffix.begin(), suffix.size()));
    }

    RngStream child(std::span<const std::uint64_t> suffix) const {
        RngStream s;
        s.seed_ = seed_;
        s.path_ = path_;
        s.path_.insert(s.path_.end(), suffix.begin(), suffix.end());
        s.chain_ = chain_;
        for (std::uint64_t e : suffix) s.chain_ = detail::mix64(s.chain_ ^ detail::mix64(e));
        s.reset_state();
        return s;
    }

    std::uint64_t next_u64() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
            static_cast<std::uint32_t>(prefix_), static_cast<std::uint32_t>(prefix_ >> 32)};
        const std::array<std::uint32_t, 4> out = detail::philox4x32(ctr, key_);
        ++counter_;
        spare_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
        have_spare_ = true;
        return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    }

    /// Uniform double in the open interval (0, 1).
    double next_unit() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Unbiased uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw invalid_input("next_below: n must be positive");
        const std::uint64_t limit = n * (~std::uint64_t{0} / n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

private:
    void reset_state() {
        key_ = {static_cast<std::uint32_t>(detail::mix64(chain_ ^ 0x6B79u)),
                static_cast<std::uint32_t>(detail::mix64(chain_ ^ 0x6B79u) >> 32)};
        prefix_ = detail::mix64(chain_ ^ 0x6374u);
        counter_ = 0;
        have_spare_ = false;
        spare_ = 0;
    }

    std::uint64_t seed_ = 0;
    std::vector<std::uint64_t> path_;
    std::uint64_t chain_ = 0;
    std::array<std::uint32_t, 2> key_{};
    std::uint64_t prefix_ = 0;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    std::uint64_t spare_ = 0;
};

inline RngStream derive_stream(std::uint64_t seed, std::span<const std::uint64_t> path) {
    return RngStream(seed, std::vector<std::uint64_t>(path.begin(), path.end()));
}

inline RngStream derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return RngStream(seed, std::vector<std::uint64_t>(path.begin(), path.end()));
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

/// The four sampler families the simulation studies need.
struct DistributionSpec {
    enum class Kind { normal, von_mises, truncated_normal, point_mass };

    Kind kind = Kind::point_mass;
    // normal: a = mean, b = variance
    // von_mises: a = mean direction (radians), b = concentration kappa
    // truncated_normal: latent normal mean a / variance b, bounds [c, d]
    // point_mass: a = value
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    static DistributionSpec normal(double mean, double variance) {
        return {Kind::normal, mean, variance, 0.0, 0.0};
    }
    static DistributionSpec von_mises(double mu, double kappa) {
        return {Kind::von_mises, mu, kappa, 0.0, 0.0};
    }
    /// Mean and variance describe the untruncated latent normal; the latent
    /// mean may lie outside [lower, upper].
    static DistributionSpec truncated_normal(double mean, double variance, double lower,
                                             double upper) {
        return {Kind::truncated_normal, mean, variance, lower, upper};
    }
    static DistributionSpec point_mass(double value) {
        return {Kind::point_mass, value, 0.0, 0.0, 0.0};
    }

    void validate() const {
        switch (kind) {
        case Kind::normal:
            if (!(b > 0.0)) throw invalid_input("normal: variance must be > 0");
            break;
        case Kind::von_mises:
            if (!(b >= 0.0)) throw invalid_input("von_mises: kappa must be >= 0");
            break;
        case Kind::truncated_normal:
            if (!(b > 0.0)) throw invalid_input("truncated_normal: variance must be > 0");
            if (!(c < d)) throw invalid_input("truncated_normal: lower must be < upper");
            break;
        case Kind::point_mass:
            break;
        }
        if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c) || !std::isfinite(d))
            throw invalid_input("distribution parameters must be finite");
    }

    /// Mean of the distribution (truncated mean for truncated_normal).
    double mean() const {
        switch (kind) {
        case Kind::normal:
        case Kind::von_mises:
        case Kind::point_mass:
            return a;
        case Kind::truncated_normal: {
            const double sd = std::sqrt(b);
            const double za = (c - a) / sd, zb = (d - a) / sd;
            const double mass = math::normal_cdf(zb) - math::normal_cdf(za);
            return a + sd * (math::normal_pdf(za) - math::normal_pdf(zb)) / mass;
        }
        }
        return a;
    }
};

namespace detail {

inline double sample_normal(RngStream& rng, double mean, double variance) {
    const double u1 = rng.next_unit();
    const double u2 = rng.next_unit();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
    return mean + std::sqrt(variance) * z;
}

// Best-Fisher (1979) rejection sampler; kappa ~ 0 falls back to uniform.
inline double sample_von_mises(RngStream& rng, double mu, double kappa) {
    if (kappa < 1e-8) return wrap_angle(-pi + 2.0 * pi * rng.next_unit());
    const double a = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double b = (a - std::sqrt(2.0 * a)) / (2.0 * kappa);
    const double r = (1.0 + b * b) / (2.0 * b);
    for (;;) {
        const double u1 = rng.next_unit();
        const double z = std::cos(pi * u1);
        const double f = (1.0 + r * z) / (r + z);
        const double c = kappa * (r - f);
        const double u2 = rng.next_unit();
        if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
            const double u3 = rng.next_unit();
            const double fc = std::max(-1.0, std::min(1.0, f));
            const double theta = (u3 < 0.5 ? -1.0 : 1.0) * std::acos(fc);
            return wrap_angle(mu + theta);
        }
    }
}

// Rejection from the latent normal when enough mass survives truncation,
// otherwise inverse-CDF restricted to [lower, upper].
inline double sample_truncated_normal(RngStream& rng, double mean, double variance, double lower,
                                      double upper) {
    const double sd = std::sqrt(variance);
    const double za = (lower - mean) / sd, zb = (upper - mean) / sd;
    const double mass = math::normal_cdf(zb) - math::normal_cdf(za);
    if (mass >= 0.10) {
        for (;;) {
            const double x = sample_normal(rng, mean, variance);
            if (x >= lower && x <= upper) return x;
        }
    }
    const double pa = math::normal_cdf(za);
    const double u = rng.next_unit();
    double p = pa + u * mass;
    p = std::max(std::numeric_limits<double>::min(), std::min(p, 1.0 - 1e-17));
    const double x = mean + sd * math::normal_quantile(p);
    return std::max(lower, std::min(upper, x));
}

} // namespace detail

/// Draw one value from `dist`. Von Mises draws land in [-pi, pi); truncated
/// normal draws never leave [lower, upper].
inline double sample(RngStream& rng, const DistributionSpec& dist) {
    dist.validate();
    switch (dist.kind) {
    case DistributionSpec::Kind::normal:
        return detail::sample_normal(rng, dist.a, dist.b);
    case DistributionSpec::Kind::von_mises:
        return detail::sample_von_mises(rng, dist.a, dist.b);
    case DistributionSpec::Kind::truncated_normal:
        return detail::sample_truncated_normal(rng, dist.a, dist.b, dist.c, dist.d);
    case DistributionSpec::Kind::point_mass:
        return dist.a;
    }
    throw invalid_input("sample: unknown distribution kind");
}

} // namespace circadia
