// SPDX-License-Identifier: Apache-2.0
#pragma once

// Convergence-order estimation: ordinary least squares in log-log space.
// PurePower fits w1 = C eta^p; PowerLog fits w1 = C eta^p |log eta| by
// dividing out the log factor first. Points at or below twice the
// statistical floor measure noise, not bias, and are dropped.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "zvonkin/errors.hpp"

namespace zvonkin {

enum class RateModel { PurePower, PowerLog };

inline const char* rate_model_name(RateModel m) {
    return m == RateModel::PurePower ? "pure_power" : "power_log";
}

struct RatePoint {
    double eta = 0.0;
    double w1 = 0.0;
    double floor = 0.0;  // statistical floor estimate at this eta
};

struct RateFit {
    RateModel model = RateModel::PurePower;
    double exponent = 0.0;
    double log_constant = 0.0;  // natural log of C
    double residual_rms = 0.0;  // in log space
    double ci_lo = 0.0, ci_hi = 0.0;
    std::vector<RatePoint> points_used;
    std::vector<RatePoint> points_dropped;
};

/// OLS fit of the convergence exponent on bias-dominated points.
inline RateFit fit_rate(const std::vector<RatePoint>& points, RateModel model) {
    RateFit fit;
    fit.model = model;
    for (const auto& p : points) {
        if (!(p.eta > 0.0) || !(p.w1 > 0.0))
            throw PreconditionViolation("rate points need positive eta and w1");
        if (p.w1 <= 2.0 * p.floor)
            fit.points_dropped.push_back(p);
        else
            fit.points_used.push_back(p);
    }
    if (fit.points_used.size() < 4)
        throw InsufficientPoints("rate fit needs >= 4 bias-dominated points, have " +
                                 std::to_string(fit.points_used.size()));

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(fit.points_used.size());
    for (const auto& p : fit.points_used) {
        const double x = std::log(p.eta);
        double y = std::log(p.w1);
        if (model == RateModel::PowerLog) y -= std::log(std::fabs(std::log(p.eta)));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    if (std::fabs(denom) < 1e-12 * std::max(1.0, n * sxx))
        throw DegenerateFit("all eta values coincide");
    fit.exponent = (n * sxy - sx * sy) / denom;
    fit.log_constant = (sy - fit.exponent * sx) / n;

    double ss = 0.0;
    for (const auto& p : fit.points_used) {
        const double x = std::log(p.eta);
        double y = std::log(p.w1);
        if (model == RateModel::PowerLog) y -= std::log(std::fabs(std::log(p.eta)));
        const double r = y - (fit.log_constant + fit.exponent * x);
        ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / n);
    fit.ci_lo = fit.ci_hi = fit.exponent;
    return fit;
}

/// Log-space RMS residual of a PurePower model with the exponent pinned;
/// only the constant is fitted. Uses the same drop rule as fit_rate.
inline double pinned_power_residual(const std::vector<RatePoint>& points, double exponent) {
    std::vector<double> resid;
    double mean = 0.0;
    for (const auto& p : points) {
        if (p.w1 <= 2.0 * p.floor) continue;
        resid.push_back(std::log(p.w1) - exponent * std::log(p.eta));
        mean += resid.back();
    }
    if (resid.empty()) throw InsufficientPoints("no bias-dominated points for the pinned fit");
    mean /= static_cast<double>(resid.size());
    double ss = 0.0;
    for (double r : resid) ss += (r - mean) * (r - mean);
    return std::sqrt(ss / static_cast<double>(resid.size()));
}

/// Percentile confidence interval from bootstrap exponent replicates,
/// widened if needed so it contains the point estimate.
inline void attach_bootstrap_ci(RateFit& fit, std::vector<double> exponents) {
    if (exponents.empty()) return;
    std::sort(exponents.begin(), exponents.end());
    const auto pick = [&](double q) {
        const double pos = q * static_cast<double>(exponents.size() - 1);
        return exponents[static_cast<std::size_t>(pos + 0.5)];
    };
    fit.ci_lo = std::min(pick(0.025), fit.exponent);
    fit.ci_hi = std::max(pick(0.975), fit.exponent);
}

}  // namespace zvonkin
