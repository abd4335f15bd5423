// SPDX-License-Identifier: Apache-2.0
#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. SC 2011) plus
// the low-discrepancy sequences used by the sampling certificates. Every
// draw is a pure function of (key, counter), which is what makes chains,
// bootstraps and probes reproducible under any parallel schedule.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace zvonkin {

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    constexpr std::uint64_t m0 = 0xD2511F53;
    constexpr std::uint64_t m1 = 0xCD9E8D57;
    const std::uint64_t p0 = m0 * ctr[0];
    const std::uint64_t p1 = m1 * ctr[2];
    const std::array<std::uint32_t, 4> out = {
        static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
        static_cast<std::uint32_t>(p1),
        static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
        static_cast<std::uint32_t>(p0)};
    ctr = out;
    key[0] += 0x9E3779B9;
    key[1] += 0xBB67AE85;
}

}  // namespace detail

/// One Philox4x32-10 block: 128 bits of counter, 64 bits of key.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) detail::philox_round(ctr, key);
    return ctr;
}

/// SplitMix64 finalizer; used to derive sub-seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic seed derivation, e.g. per-chain seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(mix64(seed) ^ (0x6C62272E07BB0142ULL + index));
}

inline double uniform01(std::uint32_t x) {
    return (static_cast<double>(x) + 0.5) * (1.0 / 4294967296.0);
}

/// Fills `out` with standard normals indexed by (seed, stream, step).
/// Each Philox block yields four normals via Box-Muller.
inline void normal_vector(std::uint64_t seed, std::uint32_t stream, std::uint64_t step,
                          std::span<double> out) {
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const std::size_t d = out.size();
    for (std::size_t block = 0; 4 * block < d; ++block) {
        const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(step),
                                                  static_cast<std::uint32_t>(step >> 32), stream,
                                                  static_cast<std::uint32_t>(block)};
        const auto r = philox4x32(ctr, key);
        double z[4];
        for (int pair = 0; pair < 2; ++pair) {
            const double u1 = uniform01(r[2 * pair]);
            const double u2 = uniform01(r[2 * pair + 1]);
            const double rad = std::sqrt(-2.0 * std::log(u1));
            const double ang = 2.0 * std::numbers::pi * u2;
            z[2 * pair] = rad * std::cos(ang);
            z[2 * pair + 1] = rad * std::sin(ang);
        }
        for (std::size_t j = 0; j < 4 && 4 * block + j < d; ++j) out[4 * block + j] = z[j];
    }
}

/// Single uniform in [0,1) indexed by (seed, stream, step).
inline double uniform_at(std::uint64_t seed, std::uint32_t stream, std::uint64_t step) {
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(step),
                                              static_cast<std::uint32_t>(step >> 32), stream,
                                              0xFFFFFFFFu};
    return uniform01(philox4x32(ctr, key)[0]);
}

/// Uniform integer in [0, n) indexed by (seed, stream, step).
inline std::uint64_t uniform_index(std::uint64_t seed, std::uint32_t stream, std::uint64_t step,
                                   std::uint64_t n) {
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(step),
                                              static_cast<std::uint32_t>(step >> 32), stream,
                                              0xFFFFFFFEu};
    const auto r = philox4x32(ctr, key);
    const std::uint64_t x = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    return x % n;
}

/// Acklam's rational approximation of the standard normal quantile,
/// |error| < 1.2e-9. Used only to shape low-discrepancy points.
inline double inverse_normal_cdf(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

/// Additive-recurrence low-discrepancy sequence (generalized golden ratio);
/// extends to any dimension. A seed contributes a Cranley-Patterson shift.
class RSequence {
  public:
    RSequence(std::size_t dim, std::uint64_t seed) : alpha_(dim), shift_(dim) {
        // plastic-constant family: phi_d solves x^(d+1) = x + 1
        double phi = 2.0;
        for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / (dim + 1.0));
        double p = 1.0;
        for (std::size_t k = 0; k < dim; ++k) {
            p /= phi;
            alpha_[k] = p;
            shift_[k] = uniform01(static_cast<std::uint32_t>(mix64(seed + 0x10001 * (k + 1))));
        }
    }

    /// i-th point in the unit cube.
    void point(std::uint64_t i, std::span<double> out) const {
        for (std::size_t k = 0; k < alpha_.size(); ++k) {
            const double v = shift_[k] + static_cast<double>(i + 1) * alpha_[k];
            out[k] = v - std::floor(v);
        }
    }

  private:
    std::vector<double> alpha_;
    std::vector<double> shift_;
};

/// Quasi-random points in the centered euclidean ball of a given radius.
/// Direction comes from normal-shaped coordinates, the radius from the
/// extra sequence dimension, giving a uniform-in-volume spread.
class BallSequence {
  public:
    BallSequence(std::size_t dim, double radius, std::uint64_t seed)
        : dim_(dim), radius_(radius), seq_(dim + 1, seed) {}

    void point(std::uint64_t i, std::span<double> out) const {
        std::vector<double> u(dim_ + 1);
        seq_.point(i, u);
        double nrm = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            out[k] = inverse_normal_cdf(u[k]);
            nrm += out[k] * out[k];
        }
        nrm = std::sqrt(nrm);
        if (nrm < 1e-300) {
            for (std::size_t k = 0; k < dim_; ++k) out[k] = 0.0;
            return;
        }
        const double r = radius_ * std::pow(u[dim_], 1.0 / static_cast<double>(dim_));
        for (std::size_t k = 0; k < dim_; ++k) out[k] *= r / nrm;
    }

  private:
    std::size_t dim_;
    double radius_;
    RSequence seq_;
};

}  // namespace zvonkin
