// SPDX-License-Identifier: Apache-2.0
#pragma once

// Wasserstein-1 distances and ergodicity diagnostics. In 1d, W1 between
// equal-size multisets is the mean absolute gap between order statistics,
// and W1 to a tabulated law is the exact integral of |Q_emp - Q_ref| over
// (0,1). In d >= 2 the sliced average over quasi-uniform directions stands in
// as a documented surrogate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "zvonkin/errors.hpp"
#include "zvonkin/parallel.hpp"
#include "zvonkin/reference.hpp"
#include "zvonkin/rng.hpp"
#include "zvonkin/sampler.hpp"
#include "zvonkin/transformed.hpp"

namespace zvonkin {

enum class W1Method { Exact1DSampleSample, Exact1DSampleReference, Sliced };

struct W1Result {
    double value = 0.0;
    W1Method method = W1Method::Exact1DSampleSample;
    std::size_t n1 = 0, n2 = 0;
    double ci_half_width = 0.0;  // bootstrap, when requested
    int n_directions = 0;        // sliced only
    bool subsampled = false;     // larger side was stride-subsampled
};

namespace detail {

/// Deterministic stride subsample of `values` down to `target` entries.
inline std::vector<double> stride_subsample(std::span<const double> values, std::size_t target) {
    std::vector<double> out;
    out.reserve(target);
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < target; ++i) out.push_back(values[(i * n) / target]);
    return out;
}

/// Mean |x_(i) - y_(i)| over sorted copies; sizes must match.
inline double w1_sorted_copy(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

/// Exact integral of |Q_emp - Q_ref| over (0,1) for sorted samples against
/// the piecewise-linear reference quantile.
inline double w1_quantile_integral(std::span<const double> sorted, const ReferenceMeasure& ref) {
    const std::size_t n = sorted.size();
    const std::size_t m = ref.cdf.size();
    double total = 0.0;
    std::size_t j = 0;  // reference knot with cdf[j] <= t
    for (std::size_t i = 0; i < n; ++i) {
        const double t0 = static_cast<double>(i) / static_cast<double>(n);
        const double t1 = static_cast<double>(i + 1) / static_cast<double>(n);
        const double c = sorted[i];
        double a = t0;
        while (a < t1) {
            while (j + 2 < m && ref.cdf[j + 1] <= a) ++j;
            const double knot_hi = (j + 1 < m) ? ref.cdf[j + 1] : 1.0;
            const double b = std::min(t1, std::max(knot_hi, a));
            if (b <= a) break;
            const double f0 = ref.cdf[j], f1 = ref.cdf[j + 1];
            double q_a, q_b;
            if (f1 <= f0) {
                q_a = q_b = ref.x[j + 1];
            } else {
                const double slope = (ref.x[j + 1] - ref.x[j]) / (f1 - f0);
                q_a = ref.x[j] + (a - f0) * slope;
                q_b = ref.x[j] + (b - f0) * slope;
            }
            const double v1 = c - q_a, v2 = c - q_b;
            if (v1 * v2 >= 0.0) {
                total += 0.5 * std::fabs(v1 + v2) * (b - a);
            } else {
                const double tc = a + v1 / (v1 - v2) * (b - a);
                total += 0.5 * std::fabs(v1) * (tc - a) + 0.5 * std::fabs(v2) * (b - tc);
            }
            a = b;
        }
    }
    return total;
}

inline std::vector<double> project(const SampleSet& s, std::span<const double> dir) {
    const std::size_t d = static_cast<std::size_t>(s.dim);
    const std::size_t n = s.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double p = 0.0;
        for (std::size_t k = 0; k < d; ++k) p += s.samples[i * d + k] * dir[k];
        out[i] = p;
    }
    return out;
}

}  // namespace detail

/// Exact 1d W1 between two sample multisets via the order-statistics
/// identity; the larger set is stride-subsampled when sizes differ.
inline W1Result w1_exact_1d(const SampleSet& s1, const SampleSet& s2) {
    if (s1.dim != 1 || s2.dim != 1)
        throw DimensionMismatch("w1_exact_1d requires one-dimensional samples");
    if (s1.size() == 0 || s2.size() == 0) throw EmptySampleSet("w1_exact_1d on empty samples");
    W1Result r;
    r.method = W1Method::Exact1DSampleSample;
    r.n1 = s1.size();
    r.n2 = s2.size();
    const std::size_t n = std::min(r.n1, r.n2);
    std::vector<double> a = (r.n1 == n) ? s1.samples : detail::stride_subsample(s1.samples, n);
    std::vector<double> b = (r.n2 == n) ? s2.samples : detail::stride_subsample(s2.samples, n);
    r.subsampled = (r.n1 != r.n2);
    r.value = detail::w1_sorted_copy(std::move(a), std::move(b));
    return r;
}

/// Exact W1 between an empirical 1d law and a tabulated reference; optional
/// percentile-bootstrap half-width over resampled data sets.
inline W1Result w1_to_reference_1d(const SampleSet& s, const ReferenceMeasure& ref,
                                   int bootstrap_resamples = 0, std::uint64_t seed = 0,
                                   int n_threads = 0) {
    if (s.dim != 1) throw DimensionMismatch("w1_to_reference_1d requires 1d samples");
    const std::size_t n = s.size();
    if (n == 0) throw EmptySampleSet("w1_to_reference_1d on an empty sample set");
    std::vector<double> sorted = s.samples;
    std::sort(sorted.begin(), sorted.end());
    W1Result r;
    r.method = W1Method::Exact1DSampleReference;
    r.n1 = n;
    r.n2 = ref.n_grid();
    r.value = detail::w1_quantile_integral(sorted, ref);
    if (bootstrap_resamples > 0) {
        std::vector<double> reps(static_cast<std::size_t>(bootstrap_resamples));
        parallel_for(
            reps.size(),
            [&](std::size_t bidx) {
                std::vector<double> draw(n);
                const std::uint64_t rep_seed = derive_seed(seed, bidx + 1);
                for (std::size_t i = 0; i < n; ++i)
                    draw[i] = sorted[uniform_index(rep_seed, 1, i, n)];
                std::sort(draw.begin(), draw.end());
                reps[bidx] = detail::w1_quantile_integral(draw, ref);
            },
            n_threads);
        std::sort(reps.begin(), reps.end());
        const auto pick = [&](double q) {
            const double pos = q * static_cast<double>(reps.size() - 1);
            return reps[static_cast<std::size_t>(pos + 0.5)];
        };
        r.ci_half_width = 0.5 * (pick(0.975) - pick(0.025));
    }
    return r;
}

/// Sliced W1: average of exact 1d distances over quasi-uniform directions.
/// A lower-bound-flavored surrogate for the d >= 2 Wasserstein distance.
inline W1Result sliced_w1(const SampleSet& s1, const SampleSet& s2, int n_directions,
                          std::uint64_t seed) {
    if (s1.dim != s2.dim) throw DimensionMismatch("sliced_w1 dimension mismatch");
    if (s1.dim < 2) throw DimensionMismatch("sliced_w1 requires dim >= 2");
    if (n_directions < 8) throw PreconditionViolation("sliced_w1 needs n_directions >= 8");
    if (s1.size() == 0 || s2.size() == 0) throw EmptySampleSet("sliced_w1 on empty samples");
    const std::size_t d = static_cast<std::size_t>(s1.dim);
    W1Result r;
    r.method = W1Method::Sliced;
    r.n1 = s1.size();
    r.n2 = s2.size();
    r.n_directions = n_directions;
    r.subsampled = (r.n1 != r.n2);

    const std::size_t n = std::min(r.n1, r.n2);
    double sum = 0.0;
    std::vector<double> dir(d);
    RSequence seq(d, seed);
    for (int jdir = 0; jdir < n_directions; ++jdir) {
        if (d == 2) {
            // quasi-uniform angles with a seeded offset; antipodes coincide
            const double theta = std::numbers::pi *
                                 (static_cast<double>(jdir) + uniform_at(seed, 7, 0)) /
                                 static_cast<double>(n_directions);
            dir[0] = std::cos(theta);
            dir[1] = std::sin(theta);
        } else {
            std::vector<double> u(d);
            seq.point(static_cast<std::uint64_t>(jdir), u);
            double nrm = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                dir[k] = inverse_normal_cdf(u[k]);
                nrm += dir[k] * dir[k];
            }
            nrm = std::sqrt(std::max(nrm, 1e-300));
            for (std::size_t k = 0; k < d; ++k) dir[k] /= nrm;
        }
        std::vector<double> p1 = detail::project(s1, dir);
        std::vector<double> p2 = detail::project(s2, dir);
        if (p1.size() != n) p1 = detail::stride_subsample(p1, n);
        if (p2.size() != n) p2 = detail::stride_subsample(p2, n);
        sum += detail::w1_sorted_copy(std::move(p1), std::move(p2));
    }
    r.value = sum / static_cast<double>(n_directions);
    return r;
}

/// (1/n) sum |x_i|^k.
inline double empirical_moment(const SampleSet& s, int k) {
    if (k < 1) throw PreconditionViolation("moment order must be >= 1");
    const std::size_t n = s.size();
    if (n == 0) throw EmptySampleSet("empirical_moment on an empty sample set");
    const std::size_t d = static_cast<std::size_t>(s.dim);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) r2 += s.samples[i * d + j] * s.samples[i * d + j];
        sum += std::pow(std::sqrt(r2), k);
    }
    return sum / static_cast<double>(n);
}

struct DriftReport {
    double eta = 0.0;
    std::vector<std::vector<double>> probe_points;
    std::vector<double> lhs;        // Monte-Carlo E[V(Z_1^x)]
    std::vector<double> lhs_se;     // standard error of each estimate
    std::vector<double> rhs;        // (1 - theta1_hat eta / 2) V(x) + c3 eta
    int violations = 0;             // lhs > rhs beyond 3 standard errors
    double fitted_theta1_hat = 0.0;
    double fitted_c3 = 0.0;
    bool passes() const { return fitted_theta1_hat > 0.0 && violations == 0; }
};

/// Monte-Carlo check of the one-step Lyapunov contraction with V = 1 + |x|^2:
/// fits E[V(Z_1^x)] = a V(x) + c over the probes, reports theta1_hat =
/// (1 - a)/eta and c3 = c/eta, and counts probes that beat the certified
/// envelope (1 - theta1_hat eta/2) V(x) + c3 eta by more than 3 sigma.
template <class Coeffs>
DriftReport lyapunov_drift_probe(const Coeffs& coeffs,
                                 const std::vector<std::vector<double>>& probe_points,
                                 double eta, int n_draws, std::uint64_t seed) {
    if (n_draws < 1000) throw PreconditionViolation("drift probe needs n_draws >= 1000");
    if (probe_points.empty()) throw PreconditionViolation("drift probe needs probe points");
    const std::size_t d = static_cast<std::size_t>(coeffs.dim());
    DriftReport rep;
    rep.eta = eta;
    rep.probe_points = probe_points;
    const std::size_t np = probe_points.size();
    rep.lhs.resize(np);
    rep.lhs_se.resize(np);
    rep.rhs.resize(np);

    std::vector<double> xi(d), z1(d);
    for (std::size_t p = 0; p < np; ++p) {
        if (probe_points[p].size() != d)
            throw DimensionMismatch("probe point dimension mismatch");
        double sum = 0.0, sum2 = 0.0;
        const std::uint64_t probe_seed = derive_seed(seed, p);
        for (int k = 0; k < n_draws; ++k) {
            normal_vector(probe_seed, 2, static_cast<std::uint64_t>(k), xi);
            em_step(coeffs, probe_points[p], eta, xi, z1);
            double v = 1.0;
            for (std::size_t j = 0; j < d; ++j) v += z1[j] * z1[j];
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / n_draws;
        const double var = std::max(0.0, sum2 / n_draws - mean * mean);
        rep.lhs[p] = mean;
        rep.lhs_se[p] = std::sqrt(var / n_draws);
    }

    // least squares of lhs on V(x)
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
        double v = 1.0;
        for (double c : probe_points[p]) v += c * c;
        sx += v;
        sy += rep.lhs[p];
        sxx += v * v;
        sxy += v * rep.lhs[p];
    }
    const double nn = static_cast<double>(np);
    const double denom = nn * sxx - sx * sx;
    double a, c;
    if (std::fabs(denom) < 1e-14 * std::max(1.0, sxx * nn)) {
        a = sxy / sxx;  // probes share one V value; fit slope through origin
        c = 0.0;
    } else {
        a = (nn * sxy - sx * sy) / denom;
        c = (sy - a * sx) / nn;
    }
    rep.fitted_theta1_hat = (1.0 - a) / eta;
    rep.fitted_c3 = c / eta;

    for (std::size_t p = 0; p < np; ++p) {
        double v = 1.0;
        for (double cc : probe_points[p]) v += cc * cc;
        rep.rhs[p] = (1.0 - 0.5 * rep.fitted_theta1_hat * eta) * v + rep.fitted_c3 * eta;
        if (rep.lhs[p] > rep.rhs[p] + 3.0 * rep.lhs_se[p]) ++rep.violations;
    }
    return rep;
}

}  // namespace zvonkin
