// SPDX-License-Identifier: Apache-2.0
#pragma once

// Corrector equation and the resulting change of variables. Component-wise,
// u_m solves
//     (1/2) <sigma sigma', D^2 u_m> - lambda u_m + <b1, grad u_m> = -b1_m
// on [-R, R]^d with zero Dirichlet boundary, discretized by centered second
// differences; the advection term is upwinded only within one cell of a
// declared b1 jump. Phi(x) = x + u(x) is a bi-Lipschitz diffeomorphism once
// sup |grad u| <= 1/2, which select_lambda enforces with margin.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "zvonkin/errors.hpp"
#include "zvonkin/grid.hpp"
#include "zvonkin/linalg.hpp"
#include "zvonkin/problem.hpp"

namespace zvonkin {

struct AssembledOperator {
    Grid grid;
    double lambda = 0.0;
    CsrMatrix matrix;                      // shared by all components
    std::vector<std::vector<double>> rhs;  // one per component of u
    // tridiagonal view for the 1d direct solve
    std::vector<double> lower, diag, upper;
};

/// Discretizes the corrector operator on the grid. Boundary rows are
/// identity (zero Dirichlet). Throws SingularAssembly if any interior
/// diagonal entry fails to be negative.
inline AssembledOperator assemble_operator(const Problem& problem, const Grid& grid,
                                           double lambda) {
    if (problem.dim != grid.dim)
        throw DimensionMismatch("grid dimension does not match the problem");
    if (problem.dim > 2) throw UnsupportedDimension("corrector solve supports dim <= 2");
    if (!(lambda > 0.0)) throw PreconditionViolation("lambda must be positive");

    const int n = grid.n_per_axis;
    const double h = grid.spacing();
    const std::size_t d = static_cast<std::size_t>(grid.dim);
    const std::size_t nodes = grid.node_count();

    AssembledOperator op;
    op.grid = grid;
    op.lambda = lambda;
    op.rhs.assign(d, std::vector<double>(nodes, 0.0));

    std::vector<double> x(d), b1v(d), sig(d * d), a(d * d);

    if (grid.dim == 1) {
        op.lower.assign(nodes, 0.0);
        op.diag.assign(nodes, 0.0);
        op.upper.assign(nodes, 0.0);
        for (int i = 0; i < n; ++i) {
            if (grid.on_boundary(i)) {
                op.diag[i] = 1.0;
                continue;
            }
            x[0] = grid.node(i);
            problem.eval_sigma(x, sig);
            problem.eval_b1(x, b1v);
            const double axx = sig[0] * sig[0];
            const double diff = 0.5 * axx / (h * h);
            double lo = diff, di = -2.0 * diff - lambda, up = diff;
            const bool near_jump = problem.b1.distance_to_discontinuity(x) <= h;
            if (near_jump) {
                if (b1v[0] >= 0.0) {  // forward difference
                    di -= b1v[0] / h;
                    up += b1v[0] / h;
                } else {  // backward difference
                    di += b1v[0] / h;
                    lo -= b1v[0] / h;
                }
            } else {
                lo -= b1v[0] / (2.0 * h);
                up += b1v[0] / (2.0 * h);
            }
            if (di >= 0.0)
                throw SingularAssembly("nonnegative diagonal in the discrete operator; shrink h");
            op.lower[i] = lo;
            op.diag[i] = di;
            op.upper[i] = up;
            op.rhs[0][i] = -b1v[0];
        }
        return op;
    }

    // dim == 2: 9-point stencil (5-point plus corners for the mixed term)
    op.matrix.reserve_rows(nodes, nodes * 9);
    const double sqrt2h = std::sqrt(2.0) * h;
    for (int ix = 0; ix < n; ++ix) {
        for (int iy = 0; iy < n; ++iy) {
            const std::size_t row = grid.index(ix, iy);
            if (grid.on_boundary(ix, iy)) {
                op.matrix.add_entry(row, 1.0);
                op.matrix.end_row();
                continue;
            }
            x[0] = grid.node(ix);
            x[1] = grid.node(iy);
            problem.eval_sigma(x, sig);
            problem.eval_b1(x, b1v);
            mat_aat(sig, a, 2);
            const double axx = a[0], axy = a[1], ayy = a[3];
            const double cxx = 0.5 * axx / (h * h);
            const double cyy = 0.5 * ayy / (h * h);
            const double cxy = 0.5 * axy / (2.0 * h * h);  // cross-difference weight

            double c_c = -2.0 * cxx - 2.0 * cyy - lambda;
            double c_e = cxx, c_w = cxx, c_n = cyy, c_s = cyy;
            const bool near_jump = problem.b1.distance_to_discontinuity(x) <= sqrt2h;
            for (std::size_t k = 0; k < 2; ++k) {
                double& plus = (k == 0) ? c_e : c_n;
                double& minus = (k == 0) ? c_w : c_s;
                const double bk = b1v[k];
                if (near_jump) {
                    if (bk >= 0.0) {
                        c_c -= bk / h;
                        plus += bk / h;
                    } else {
                        c_c += bk / h;
                        minus -= bk / h;
                    }
                } else {
                    plus += bk / (2.0 * h);
                    minus -= bk / (2.0 * h);
                }
            }
            if (c_c >= 0.0)
                throw SingularAssembly("nonnegative diagonal in the discrete operator; shrink h");

            // u_xy ~ (u_{i+1,j+1} - u_{i+1,j-1} - u_{i-1,j+1} + u_{i-1,j-1}) / (4 h^2)
            op.matrix.add_entry(grid.index(ix - 1, iy - 1), cxy);
            op.matrix.add_entry(grid.index(ix - 1, iy), c_w);
            op.matrix.add_entry(grid.index(ix - 1, iy + 1), -cxy);
            op.matrix.add_entry(grid.index(ix, iy - 1), c_s);
            op.matrix.add_entry(row, c_c);
            op.matrix.add_entry(grid.index(ix, iy + 1), c_n);
            op.matrix.add_entry(grid.index(ix + 1, iy - 1), -cxy);
            op.matrix.add_entry(grid.index(ix + 1, iy), c_e);
            op.matrix.add_entry(grid.index(ix + 1, iy + 1), cxy);
            op.matrix.end_row();

            for (std::size_t m = 0; m < 2; ++m) op.rhs[m][row] = -b1v[m];
        }
    }
    return op;
}

enum class BoundaryPolicy { ZeroDirichlet };

struct CorrectorField {
    Grid grid;
    double lambda = 0.0;
    // node-major storage: u[node*d + m], grad_u[node*d*d + m*d + k] = du_m/dx_k
    std::vector<double> u;
    std::vector<double> grad_u;
    double sup_u = 0.0;
    double sup_grad_u = 0.0;
    BoundaryPolicy boundary = BoundaryPolicy::ZeroDirichlet;
    std::shared_ptr<std::atomic<std::uint64_t>> out_of_domain_hits =
        std::make_shared<std::atomic<std::uint64_t>>(0);

    bool diffeomorphism_certified() const { return sup_grad_u <= 0.5; }

    /// Multilinear interpolation of u and grad u. Points outside the grid box
    /// evaluate at their box projection (constant extension) and are counted.
    /// Returns true if the point was clamped.
    bool eval(std::span<const double> x, std::span<double> u_out,
              std::span<double> grad_out) const {
        const std::size_t d = static_cast<std::size_t>(grid.dim);
        const int n = grid.n_per_axis;
        const double h = grid.spacing();
        bool clamped = false;
        int cell[2] = {0, 0};
        double w[2] = {0.0, 0.0};
        for (std::size_t k = 0; k < d; ++k) {
            double xk = x[k];
            if (xk < -grid.radius) {
                xk = -grid.radius;
                clamped = true;
            } else if (xk > grid.radius) {
                xk = grid.radius;
                clamped = true;
            }
            double c = std::floor((xk + grid.radius) / h);
            if (c > static_cast<double>(n - 2)) c = static_cast<double>(n - 2);
            if (c < 0.0) c = 0.0;
            cell[k] = static_cast<int>(c);
            w[k] = (xk - grid.node(cell[k])) / h;
        }
        if (clamped) out_of_domain_hits->fetch_add(1, std::memory_order_relaxed);

        auto accumulate = [&](std::size_t node, double weight) {
            const double* up = u.data() + node * d;
            const double* gp = grad_u.data() + node * d * d;
            for (std::size_t m = 0; m < d; ++m) u_out[m] += weight * up[m];
            for (std::size_t m = 0; m < d * d; ++m) grad_out[m] += weight * gp[m];
        };
        for (std::size_t m = 0; m < d; ++m) u_out[m] = 0.0;
        for (std::size_t m = 0; m < d * d; ++m) grad_out[m] = 0.0;
        if (d == 1) {
            accumulate(grid.index(cell[0]), 1.0 - w[0]);
            accumulate(grid.index(cell[0] + 1), w[0]);
        } else {
            accumulate(grid.index(cell[0], cell[1]), (1.0 - w[0]) * (1.0 - w[1]));
            accumulate(grid.index(cell[0] + 1, cell[1]), w[0] * (1.0 - w[1]));
            accumulate(grid.index(cell[0], cell[1] + 1), (1.0 - w[0]) * w[1]);
            accumulate(grid.index(cell[0] + 1, cell[1] + 1), w[0] * w[1]);
        }
        return clamped;
    }

    /// Phi(x) = x + u(x).
    void phi(std::span<const double> x, std::span<double> y) const {
        const std::size_t d = static_cast<std::size_t>(grid.dim);
        std::vector<double> uv(d), gv(d * d);
        eval(x, uv, gv);
        for (std::size_t k = 0; k < d; ++k) y[k] = x[k] + uv[k];
    }
    std::vector<double> phi(std::span<const double> x) const {
        std::vector<double> y(x.size());
        phi(x, y);
        return y;
    }

    /// Solves Phi(x) = y by the fixed point x <- y - u(x); geometric
    /// convergence with ratio sup_grad_u <= 1/2.
    void phi_inverse(std::span<const double> y, std::span<double> x_out, double tol = 1e-10,
                     int max_iter = 100) const {
        if (!diffeomorphism_certified())
            throw PreconditionViolation(
                "phi_inverse requires sup_grad_u <= 1/2 (run select_lambda)");
        const std::size_t d = static_cast<std::size_t>(grid.dim);
        std::vector<double> uv(d), gv(d * d);
        for (std::size_t k = 0; k < d; ++k) x_out[k] = y[k];
        for (int it = 0; it < max_iter; ++it) {
            eval(x_out, uv, gv);
            double delta2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double nx = y[k] - uv[k];
                delta2 += (nx - x_out[k]) * (nx - x_out[k]);
                x_out[k] = nx;
            }
            if (delta2 <= tol * tol) return;
        }
        throw NoConvergence("phi_inverse fixed point did not converge");
    }
    std::vector<double> phi_inverse(std::span<const double> y, double tol = 1e-10,
                                    int max_iter = 100) const {
        std::vector<double> x(y.size());
        phi_inverse(y, x, tol, max_iter);
        return x;
    }
};

/// Solves the corrector systems and fills the gradient by central differences
/// (one-sided at the boundary). Does not enforce the diffeomorphism bound;
/// that is select_lambda's job.
inline CorrectorField solve_corrector(const Problem& problem, const Grid& grid, double lambda) {
    AssembledOperator op = assemble_operator(problem, grid, lambda);
    const std::size_t d = static_cast<std::size_t>(grid.dim);
    const std::size_t nodes = grid.node_count();
    const int n = grid.n_per_axis;
    const double h = grid.spacing();

    CorrectorField field;
    field.grid = grid;
    field.lambda = lambda;
    field.u.assign(nodes * d, 0.0);
    field.grad_u.assign(nodes * d * d, 0.0);

    for (std::size_t m = 0; m < d; ++m) {
        std::vector<double> um;
        if (grid.dim == 1) {
            um = tridiag_solve(op.lower, op.diag, op.upper, op.rhs[m]);
        } else {
            um = bicgstab_solve(op.matrix, op.rhs[m], 1e-10, 20000);
        }
        for (double v : um)
            if (!std::isfinite(v)) throw LinearSolveFailure("corrector solution has NaN/Inf");
        for (std::size_t i = 0; i < nodes; ++i) field.u[i * d + m] = um[i];
    }

    // gradient tables
    auto u_at = [&](int ix, int iy, std::size_t m) {
        return field.u[grid.index(ix, iy) * d + m];
    };
    auto deriv = [&](int i, auto value) {
        // value(j) samples along the axis at index j
        if (i == 0) return (value(1) - value(0)) / h;
        if (i == n - 1) return (value(n - 1) - value(n - 2)) / h;
        return (value(i + 1) - value(i - 1)) / (2.0 * h);
    };
    if (grid.dim == 1) {
        for (int i = 0; i < n; ++i)
            field.grad_u[grid.index(i)] = deriv(i, [&](int j) { return u_at(j, 0, 0); });
    } else {
        for (int ix = 0; ix < n; ++ix)
            for (int iy = 0; iy < n; ++iy) {
                const std::size_t node = grid.index(ix, iy);
                for (std::size_t m = 0; m < 2; ++m) {
                    field.grad_u[node * 4 + m * 2 + 0] =
                        deriv(ix, [&](int j) { return u_at(j, iy, m); });
                    field.grad_u[node * 4 + m * 2 + 1] =
                        deriv(iy, [&](int j) { return u_at(ix, j, m); });
                }
            }
    }

    for (std::size_t i = 0; i < nodes; ++i) {
        double nrm = 0.0;
        for (std::size_t m = 0; m < d; ++m) nrm += field.u[i * d + m] * field.u[i * d + m];
        field.sup_u = std::max(field.sup_u, std::sqrt(nrm));
        field.sup_grad_u = std::max(
            field.sup_grad_u,
            spectral_norm(std::span<const double>(field.grad_u.data() + i * d * d, d * d), d));
    }
    return field;
}

struct LambdaSelection {
    double lambda = 0.0;
    CorrectorField field;
};

/// Doubles lambda from lambda0 until sup |grad u| <= target. The margin
/// below 1/2 absorbs off-grid interpolation error.
inline LambdaSelection select_lambda(const Problem& problem, const Grid& grid,
                                     double target = 0.4, double lambda0 = 1.0) {
    if (!(target > 0.0 && target < 0.5))
        throw PreconditionViolation("select_lambda target must lie in (0, 0.5)");
    if (!(lambda0 > 0.0)) throw PreconditionViolation("lambda0 must be positive");
    double lambda = lambda0;
    for (int attempt = 0; attempt <= 40; ++attempt) {
        CorrectorField field = solve_corrector(problem, grid, lambda);
        if (field.sup_grad_u <= target) return {lambda, std::move(field)};
        lambda *= 2.0;
    }
    throw LambdaSearchExhausted("no lambda with sup_grad_u <= target after 40 doublings");
}

// --- corrector cache (versioned text format, see README) ---

inline void save_corrector(const CorrectorField& field, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    out << "zvonkin-corrector-cache v1\n";
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    };
    out << field.grid.dim << ' ';
    put(field.grid.radius);
    out << ' ' << field.grid.n_per_axis << ' ';
    put(field.lambda);
    out << " zero_dirichlet\n";
    const std::size_t d = static_cast<std::size_t>(field.grid.dim);
    const std::size_t nodes = field.grid.node_count();
    for (std::size_t i = 0; i < nodes; ++i) {
        for (std::size_t m = 0; m < d; ++m) {
            if (m) out << ' ';
            put(field.u[i * d + m]);
        }
        for (std::size_t m = 0; m < d * d; ++m) {
            out << ' ';
            put(field.grad_u[i * d * d + m]);
        }
        out << '\n';
    }
    if (!out) throw IoFailure("write failed for '" + path + "'");
}

inline CorrectorField load_corrector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path + "' for reading");
    std::string magic, version;
    in >> magic >> version;
    if (magic != "zvonkin-corrector-cache" || version != "v1")
        throw IoFailure("'" + path + "' is not a v1 corrector cache");
    int dim = 0, n = 0;
    double radius = 0.0, lambda = 0.0;
    std::string bc;
    in >> dim >> radius >> n >> lambda >> bc;
    if (!in || bc != "zero_dirichlet") throw IoFailure("corrupt corrector cache header");
    CorrectorField field;
    field.grid = Grid(dim, radius, n);
    field.lambda = lambda;
    const std::size_t d = static_cast<std::size_t>(dim);
    const std::size_t nodes = field.grid.node_count();
    field.u.resize(nodes * d);
    field.grad_u.resize(nodes * d * d);
    for (std::size_t i = 0; i < nodes; ++i) {
        for (std::size_t m = 0; m < d; ++m) in >> field.u[i * d + m];
        for (std::size_t m = 0; m < d * d; ++m) in >> field.grad_u[i * d * d + m];
    }
    if (!in) throw IoFailure("corrupt corrector cache body");
    for (std::size_t i = 0; i < nodes; ++i) {
        double nrm = 0.0;
        for (std::size_t m = 0; m < d; ++m) nrm += field.u[i * d + m] * field.u[i * d + m];
        field.sup_u = std::max(field.sup_u, std::sqrt(nrm));
        field.sup_grad_u = std::max(
            field.sup_grad_u,
            spectral_norm(std::span<const double>(field.grad_u.data() + i * d * d, d * d), d));
    }
    return field;
}

}  // namespace zvonkin
