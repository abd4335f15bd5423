// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact 1d stationary laws for constant-sigma problems. With dX = b dt + s dW
// the invariant density is p(x) proportional to exp((2/s^2) Int_0^x b), which
// composite Simpson quadrature tabulates to high order once the cells are
// split at the declared jumps of b1.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "zvonkin/errors.hpp"
#include "zvonkin/problem.hpp"

namespace zvonkin {

struct ReferenceMeasure {
    double r_ref = 0.0;
    std::vector<double> x;        // uniform nodes on [-r_ref, r_ref]
    std::vector<double> density;  // normalized, positive
    std::vector<double> cdf;      // strictly increasing from 0 to 1
    std::vector<double> quantile; // tabulated at t_j = (j+1)/(m+1), j = 0..m-1
    double normalization_error = 0.0;

    std::size_t n_grid() const { return x.size(); }
    double spacing() const { return (x.size() > 1) ? (x[1] - x[0]) : 0.0; }

    /// Inverse of the piecewise-linear cdf; exact on the tabulated knots.
    double quantile_at(double t) const {
        if (t <= 0.0) return x.front();
        if (t >= 1.0) return x.back();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), t);
        std::size_t j = static_cast<std::size_t>(it - cdf.begin());
        if (j == 0) return x.front();
        const double f0 = cdf[j - 1], f1 = cdf[j];
        if (f1 <= f0) return x[j];
        const double w = (t - f0) / (f1 - f0);
        return x[j - 1] + w * (x[j] - x[j - 1]);
    }

    double cdf_at(double v) const {
        if (v <= x.front()) return 0.0;
        if (v >= x.back()) return 1.0;
        const double h = spacing();
        const std::size_t j = static_cast<std::size_t>((v - x.front()) / h);
        const std::size_t i = std::min(j, x.size() - 2);
        const double w = (v - x[i]) / h;
        return cdf[i] + w * (cdf[i + 1] - cdf[i]);
    }

    /// k-th raw moment of the tabulated density; composite Simpson over node
    /// pairs (4th order), trapezoid on a leftover tail cell.
    double moment(int k) const {
        const std::size_t n = x.size();
        auto f = [&](std::size_t i) { return std::pow(x[i], k) * density[i]; };
        double s = 0.0;
        std::size_t i = 0;
        for (; i + 2 < n; i += 2) s += (x[i + 2] - x[i]) / 6.0 * (f(i) + 4.0 * f(i + 1) + f(i + 2));
        if (i + 1 < n) s += 0.5 * (x[i + 1] - x[i]) * (f(i) + f(i + 1));
        return s;
    }
    double mean() const { return moment(1); }
    double variance() const {
        const double m = mean();
        return moment(2) - m * m;
    }
};

namespace detail {

/// Simpson integral of the 1d drift over [a, b], splitting at declared jumps.
/// Endpoint evaluations are nudged inward so each smooth side is sampled on
/// the correct side of a jump.
inline double drift_cell_integral(const Problem& problem, double a, double b,
                                  std::span<const double> jumps) {
    auto b_at = [&](double t) {
        const double pt[1] = {t};
        double out[1];
        problem.eval_b(std::span<const double>(pt, 1), std::span<double>(out, 1));
        return out[0];
    };
    auto simpson = [&](double lo, double hi) {
        const double nudge = 1e-12 * std::max(1.0, std::fabs(lo) + std::fabs(hi));
        const double l = lo + nudge, h = hi - nudge;
        return (hi - lo) / 6.0 * (b_at(l) + 4.0 * b_at(0.5 * (l + h)) + b_at(h));
    };
    std::vector<double> cuts;
    for (double j : jumps)
        if (j > a && j < b) cuts.push_back(j);
    std::sort(cuts.begin(), cuts.end());
    double s = 0.0, lo = a;
    for (double c : cuts) {
        s += simpson(lo, c);
        lo = c;
    }
    s += simpson(lo, b);
    return s;
}

}  // namespace detail

/// Tabulates the exact invariant law of a 1d constant-sigma problem.
inline ReferenceMeasure gibbs_reference_1d(const Problem& problem, double r_ref, int n_grid) {
    if (problem.dim != 1) throw NotOneDimensional("gibbs reference requires dim == 1");
    double s = 0.0;
    if (!problem.sigma_is_constant_scalar(&s) || !(s > 0.0))
        throw NonConstantSigma("gibbs reference requires sigma = ConstantMatrix(s), s > 0");
    if (n_grid < 1000) throw PreconditionViolation("n_grid must be >= 1000");
    if (!(r_ref > 0.0)) throw PreconditionViolation("r_ref must be positive");

    const std::size_t n = static_cast<std::size_t>(n_grid);
    const double h = 2.0 * r_ref / static_cast<double>(n - 1);
    const std::vector<double> jumps = problem.b1.discontinuities_1d();
    const double scale = 2.0 / (s * s);

    ReferenceMeasure ref;
    ref.r_ref = r_ref;
    ref.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) ref.x[i] = -r_ref + static_cast<double>(i) * h;

    // cumulative antiderivative of b from the left edge, nodes and midpoints
    std::vector<double> anti(n), anti_mid(n - 1);
    anti[0] = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double mid = 0.5 * (ref.x[i] + ref.x[i + 1]);
        anti_mid[i] = anti[i] + detail::drift_cell_integral(problem, ref.x[i], mid, jumps);
        anti[i + 1] = anti_mid[i] + detail::drift_cell_integral(problem, mid, ref.x[i + 1], jumps);
    }
    // normalization constants cancel, so only differences of `anti` matter;
    // subtract the max before exponentiating to stay in range
    double peak = anti[0];
    for (double v : anti) peak = std::max(peak, v);
    std::vector<double> q(n), q_mid(n - 1);
    for (std::size_t i = 0; i < n; ++i) q[i] = std::exp(scale * (anti[i] - peak));
    for (std::size_t i = 0; i + 1 < n; ++i) q_mid[i] = std::exp(scale * (anti_mid[i] - peak));

    double qmax = 0.0;
    for (double v : q) qmax = std::max(qmax, v);
    if (std::max(q.front(), q.back()) > 1e-10 * qmax)
        throw MassLeak("reference support truncated too early; increase r_ref");

    // Simpson mass per cell, then normalize
    std::vector<double> cell(n - 1);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        cell[i] = h / 6.0 * (q[i] + 4.0 * q_mid[i] + q[i + 1]);
        total += cell[i];
    }
    ref.density.resize(n);
    for (std::size_t i = 0; i < n; ++i) ref.density[i] = q[i] / total;
    ref.cdf.resize(n);
    ref.cdf[0] = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) ref.cdf[i + 1] = ref.cdf[i] + cell[i] / total;
    ref.normalization_error = std::fabs(ref.cdf.back() - 1.0);
    ref.cdf.back() = 1.0;

    ref.quantile.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        ref.quantile[j] = ref.quantile_at(static_cast<double>(j + 1) / static_cast<double>(n + 1));
    return ref;
}

}  // namespace zvonkin
