// SPDX-License-Identifier: Apache-2.0
#pragma once

// Coefficients of the transformed SDE dY = bhat(Y) dt + sigmahat(Y) dW:
//     bhat     = (lambda u + (I + grad u) b2) o Phi^{-1}
//     sigmahat = ((I + grad u) sigma)        o Phi^{-1}
// Both share one inverse-map solve per evaluation point.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "zvonkin/corrector.hpp"
#include "zvonkin/errors.hpp"
#include "zvonkin/problem.hpp"

namespace zvonkin {

struct EvalStats {
    std::uint64_t out_of_domain = 0;   // evaluations outside the trusted inner ball
    std::uint64_t evaluations = 0;
};

class TransformedCoefficients {
  public:
    TransformedCoefficients(Problem problem, std::shared_ptr<const CorrectorField> field)
        : problem_(std::move(problem)), field_(std::move(field)) {
        const double r = field_->grid.radius;
        inner_radius_ = r - std::max(4.0, r / 3.0);
        const double h = field_->grid.spacing();
        if (inner_radius_ > r - 2.0 * h) inner_radius_ = r - 2.0 * h;
        if (inner_radius_ <= 0.0)
            throw PreconditionViolation("grid radius too small for a trusted inner ball");
    }

    int dim() const { return problem_.dim; }
    const Problem& problem() const { return problem_; }
    const CorrectorField& field() const { return *field_; }
    double inner_radius() const { return inner_radius_; }
    double grid_radius() const { return field_->grid.radius; }

    /// Evaluates bhat(y) and sigmahat(y) with a single Phi^{-1}(y) solve.
    /// sigma_out may be empty when only the drift is needed.
    void eval(std::span<const double> y, std::span<double> b_out, std::span<double> sigma_out,
              EvalStats* stats = nullptr, double tol = 1e-10, int max_iter = 100) const {
        const std::size_t d = static_cast<std::size_t>(problem_.dim);
        double xbuf[2], ubuf[2], gbuf[4];
        std::span<double> x(xbuf, d), uv(ubuf, d), gv(gbuf, d * d);

        if (!field_->diffeomorphism_certified())
            throw PreconditionViolation(
                "transformed coefficients need sup_grad_u <= 1/2 (run select_lambda)");
        // Inverse map solve accelerated with the stored gradient table
        // (quasi-Newton on Phi(x) - y; the plain fixed point x <- y - u(x)
        // is the fallback). Same limit point and tolerance contract as
        // CorrectorField::phi_inverse, a few times fewer field evaluations.
        for (std::size_t k = 0; k < d; ++k) x[k] = y[k];
        bool converged = false;
        for (int it = 0; it < max_iter; ++it) {
            field_->eval(x, uv, gv);
            double rbuf[2];
            double r2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                rbuf[k] = x[k] + uv[k] - y[k];
                r2 += rbuf[k] * rbuf[k];
            }
            if (r2 <= tol * tol) {
                converged = true;
                break;
            }
            bool newton_ok = false;
            if (d == 1) {
                const double jac = 1.0 + gv[0];
                if (std::fabs(jac) > 0.25) {
                    x[0] -= rbuf[0] / jac;
                    newton_ok = true;
                }
            } else {
                const double j00 = 1.0 + gv[0], j01 = gv[1];
                const double j10 = gv[2], j11 = 1.0 + gv[3];
                const double det = j00 * j11 - j01 * j10;
                if (std::fabs(det) > 0.0625) {
                    x[0] -= (j11 * rbuf[0] - j01 * rbuf[1]) / det;
                    x[1] -= (-j10 * rbuf[0] + j00 * rbuf[1]) / det;
                    newton_ok = true;
                }
            }
            if (!newton_ok)
                for (std::size_t k = 0; k < d; ++k) x[k] = y[k] - uv[k];
        }
        if (!converged) throw NoConvergence("phi_inverse iteration did not converge");
        // uv and gv already hold the field at the converged x

        if (stats) {
            ++stats->evaluations;
            double r2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) r2 += x[k] * x[k];
            if (r2 > inner_radius_ * inner_radius_) ++stats->out_of_domain;
        }

        double b2buf[2], sbuf[4];
        std::span<double> b2v(b2buf, d);
        problem_.eval_b2(x, b2v);
        // bhat = lambda u(x) + (I + grad u(x)) b2(x)
        for (std::size_t m = 0; m < d; ++m) {
            double s = field_->lambda * uv[m] + b2v[m];
            for (std::size_t k = 0; k < d; ++k) s += gv[m * d + k] * b2v[k];
            b_out[m] = s;
        }
        if (!sigma_out.empty()) {
            std::span<double> sg(sbuf, d * d);
            problem_.eval_sigma(x, sg);
            // sigmahat = (I + grad u(x)) sigma(x)
            for (std::size_t m = 0; m < d; ++m)
                for (std::size_t j = 0; j < d; ++j) {
                    double s = sg[m * d + j];
                    for (std::size_t k = 0; k < d; ++k) s += gv[m * d + k] * sg[k * d + j];
                    sigma_out[m * d + j] = s;
                }
        }
    }

    std::vector<double> drift(std::span<const double> y, EvalStats* stats = nullptr) const {
        std::vector<double> b(y.size());
        eval(y, b, {}, stats);
        return b;
    }
    std::vector<double> diffusion(std::span<const double> y, EvalStats* stats = nullptr) const {
        std::vector<double> b(y.size()), s(y.size() * y.size());
        eval(y, b, s, stats);
        return s;
    }

  private:
    Problem problem_;
    std::shared_ptr<const CorrectorField> field_;
    double inner_radius_ = 0.0;
};

inline TransformedCoefficients make_transformed(const Problem& problem, CorrectorField field) {
    return TransformedCoefficients(problem,
                                   std::make_shared<const CorrectorField>(std::move(field)));
}

/// Untransformed coefficients of the original SDE, for the naive baseline.
class NaiveCoefficients {
  public:
    explicit NaiveCoefficients(Problem problem) : problem_(std::move(problem)) {}
    int dim() const { return problem_.dim; }
    void eval(std::span<const double> y, std::span<double> b_out, std::span<double> sigma_out,
              EvalStats* stats = nullptr) const {
        if (stats) ++stats->evaluations;
        problem_.eval_b(y, b_out);
        if (!sigma_out.empty()) problem_.eval_sigma(y, sigma_out);
    }

  private:
    Problem problem_;
};

}  // namespace zvonkin
