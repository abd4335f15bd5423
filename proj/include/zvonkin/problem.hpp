// SPDX-License-Identifier: Apache-2.0
#pragma once

// SDE problem instances dX = (b1 + b2) dt + sigma dW with a dissipative
// Lipschitz part b2 and a singular part b1, plus the sampling-based
// certificates for the standing assumptions.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "zvonkin/errors.hpp"
#include "zvonkin/function_spec.hpp"
#include "zvonkin/linalg.hpp"
#include "zvonkin/rng.hpp"

namespace zvonkin {

enum class CaseTag {
    Case1LinfL1,      // b1 bounded and integrable (possibly discontinuous)
    Case2HolderAlpha  // b1 bounded alpha-Hoelder, alpha in (0,1)
};

inline const char* case_name(CaseTag t) {
    return t == CaseTag::Case1LinfL1 ? "case1" : "case2";
}

struct ProblemSpec {
    int dim = 1;
    FunctionSpec b1;
    FunctionSpec b2;
    FunctionSpec sigma;
    CaseTag case_tag = CaseTag::Case1LinfL1;
    double alpha = 0.0;  // Case 2 Hoelder exponent
    double theta1 = 1.0;
    double theta2 = 0.0;
    double theta3 = 1.0;
    double lambda_sigma = 0.9;
    std::string id = "problem";
};

struct Problem {
    int dim = 1;
    FunctionSpec b1;
    FunctionSpec b2;
    FunctionSpec sigma;
    CaseTag case_tag = CaseTag::Case1LinfL1;
    double alpha = 0.0;
    double theta1 = 1.0;
    double theta2 = 0.0;
    double theta3 = 1.0;
    double lambda_sigma = 0.9;
    std::string id = "problem";

    void eval_b1(std::span<const double> x, std::span<double> out) const {
        b1.eval_vector(x, out);
    }
    void eval_b2(std::span<const double> x, std::span<double> out) const {
        b2.eval_vector(x, out);
    }
    void eval_b(std::span<const double> x, std::span<double> out) const {
        std::vector<double> tmp(x.size());
        b1.eval_vector(x, out);
        b2.eval_vector(x, tmp);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += tmp[i];
    }
    void eval_sigma(std::span<const double> x, std::span<double> out) const {
        sigma.eval_matrix(x, out);
    }

    bool sigma_is_constant_scalar(double* s_out = nullptr) const {
        if (sigma.kind != FunctionSpec::Kind::ConstantMatrix) return false;
        if (dim != 1) return false;
        if (s_out) *s_out = sigma.matrix[0];
        return true;
    }
};

/// Validates and freezes a problem description.
inline Problem make_problem(const ProblemSpec& spec) {
    if (spec.dim < 1) throw InvalidConstant("dim must be >= 1");
    if (!(spec.theta1 > 0.0)) throw InvalidConstant("theta1 must be positive");
    if (spec.theta2 < 0.0) throw InvalidConstant("theta2 must be nonnegative");
    if (!(spec.theta3 > 0.0)) throw InvalidConstant("theta3 must be positive");
    if (!(spec.lambda_sigma > 0.0 && spec.lambda_sigma < 1.0))
        throw InvalidConstant("lambda_sigma must lie in (0, 1)");
    if (spec.case_tag == CaseTag::Case2HolderAlpha && !(spec.alpha > 0.0 && spec.alpha < 1.0))
        throw InvalidConstant("Case 2 requires alpha in (0, 1)");
    if (!spec.b1.vector_valued()) throw DimensionMismatch("b1 must be vector valued");
    if (!spec.b2.vector_valued()) throw DimensionMismatch("b2 must be vector valued");
    if (spec.sigma.vector_valued()) throw DimensionMismatch("sigma must be matrix valued");
    spec.b1.validate(spec.dim);
    spec.b2.validate(spec.dim);
    spec.sigma.validate(spec.dim);

    Problem p;
    p.dim = spec.dim;
    p.b1 = spec.b1;
    p.b2 = spec.b2;
    p.sigma = spec.sigma;
    p.case_tag = spec.case_tag;
    p.alpha = spec.alpha;
    p.theta1 = spec.theta1;
    p.theta2 = spec.theta2;
    p.theta3 = spec.theta3;
    p.lambda_sigma = spec.lambda_sigma;
    p.id = spec.id;
    return p;
}

struct DissipativityReport {
    double max_violation = 0.0;   // max of <x, b2(x)> + theta1 |x|^2 - theta2
    std::vector<double> worst_point;
    bool pass() const { return max_violation <= 0.0; }
};

/// Samples <x, b2(x)> + theta1 |x|^2 - theta2 at quasi-random points in a
/// ball; a nonpositive maximum certifies the dissipativity condition there.
inline DissipativityReport check_dissipativity(const Problem& problem, int n_points,
                                               double radius, std::uint64_t seed) {
    if (n_points < 1) throw PreconditionViolation("n_points must be >= 1");
    if (!(radius > 0.0)) throw PreconditionViolation("radius must be positive");
    const std::size_t d = static_cast<std::size_t>(problem.dim);
    BallSequence seq(d, radius, seed);
    std::vector<double> x(d), b(d);
    DissipativityReport rep;
    rep.max_violation = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_points; ++i) {
        seq.point(static_cast<std::uint64_t>(i), x);
        problem.eval_b2(x, b);
        for (double v : b)
            if (!std::isfinite(v))
                throw EvaluationFailure("b2 evaluated to a non-finite value");
        const double val = dot(x, b) + problem.theta1 * dot(x, x) - problem.theta2;
        if (val > rep.max_violation) {
            rep.max_violation = val;
            rep.worst_point = x;
        }
    }
    return rep;
}

struct LipschitzReport {
    double estimate = 0.0;  // max sampled difference quotient
    bool exceeds_theta3 = false;
};

/// Max of |b2(x)-b2(y)| / |x-y| over sampled pairs; flags estimates above
/// theta3 beyond rounding slack.
inline LipschitzReport check_lipschitz_b2(const Problem& problem, int n_pairs, double radius,
                                          std::uint64_t seed) {
    if (n_pairs < 1) throw PreconditionViolation("n_pairs must be >= 1");
    const std::size_t d = static_cast<std::size_t>(problem.dim);
    BallSequence seq(d, radius, seed);
    BallSequence seq2(d, radius, mix64(seed ^ 0xA5A5A5A5ULL));
    std::vector<double> x(d), y(d), bx(d), by(d);
    LipschitzReport rep;
    for (int i = 0; i < n_pairs; ++i) {
        seq.point(static_cast<std::uint64_t>(i), x);
        seq2.point(static_cast<std::uint64_t>(i), y);
        double dist2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double dk = x[k] - y[k];
            dist2 += dk * dk;
        }
        if (dist2 < 1e-24) continue;
        problem.eval_b2(x, bx);
        problem.eval_b2(y, by);
        double diff2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            if (!std::isfinite(bx[k]) || !std::isfinite(by[k]))
                throw EvaluationFailure("b2 evaluated to a non-finite value");
            const double dk = bx[k] - by[k];
            diff2 += dk * dk;
        }
        rep.estimate = std::max(rep.estimate, std::sqrt(diff2 / dist2));
    }
    rep.exceeds_theta3 = rep.estimate > problem.theta3 * (1.0 + 1e-6);
    return rep;
}

struct EllipticityReport {
    double min_eig = 0.0;
    double max_eig = 0.0;
    bool pass = false;  // min >= lambda_sigma and max <= 1/lambda_sigma
};

/// Eigenvalue range of sigma(x) sigma(x)' over sampled points.
inline EllipticityReport check_ellipticity(const Problem& problem, int n_points, double radius,
                                           std::uint64_t seed) {
    if (n_points < 1) throw PreconditionViolation("n_points must be >= 1");
    const std::size_t d = static_cast<std::size_t>(problem.dim);
    BallSequence seq(d, radius, seed);
    std::vector<double> x(d), s(d * d), a(d * d);
    EllipticityReport rep;
    rep.min_eig = std::numeric_limits<double>::infinity();
    rep.max_eig = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_points; ++i) {
        seq.point(static_cast<std::uint64_t>(i), x);
        problem.eval_sigma(x, s);
        for (double v : s)
            if (!std::isfinite(v))
                throw EvaluationFailure("sigma evaluated to a non-finite value");
        mat_aat(s, a, d);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r + 1; c < d; ++c)
                if (std::fabs(a[r * d + c] - a[c * d + r]) > 1e-12)
                    throw NonSymmetricProduct("sigma sigma' asymmetric beyond 1e-12");
        const EigRange e = sym_eig_range(a, d);
        rep.min_eig = std::min(rep.min_eig, e.min_eig);
        rep.max_eig = std::max(rep.max_eig, e.max_eig);
    }
    rep.pass = rep.min_eig >= problem.lambda_sigma &&
               rep.max_eig <= 1.0 / problem.lambda_sigma;
    return rep;
}

}  // namespace zvonkin
