// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "zvonkin/errors.hpp"

namespace zvonkin {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y = A x for a row-major d-by-d matrix.
inline void mat_vec(std::span<const double> a, std::span<const double> x, std::span<double> y) {
    const std::size_t d = x.size();
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * x[j];
        y[i] = s;
    }
}

/// C = A B for row-major d-by-d matrices.
inline void mat_mul(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t d) {
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += a[i * d + k] * b[k * d + j];
            c[i * d + j] = s;
        }
}

/// C = A A' for a row-major d-by-d matrix.
inline void mat_aat(std::span<const double> a, std::span<double> c, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += a[i * d + k] * a[j * d + k];
            c[i * d + j] = s;
        }
}

struct EigRange {
    double min_eig;
    double max_eig;
};

/// Eigenvalue range of a symmetric d-by-d matrix by cyclic Jacobi rotations.
/// Intended for the small d used throughout (d <= 4 in practice).
inline EigRange sym_eig_range(std::span<const double> m, std::size_t d) {
    if (d == 1) return {m[0], m[0]};
    std::vector<double> a(m.begin(), m.end());
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p];
                    const double akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k];
                    const double aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
    }
    double lo = a[0], hi = a[0];
    for (std::size_t i = 1; i < d; ++i) {
        lo = std::min(lo, a[i * d + i]);
        hi = std::max(hi, a[i * d + i]);
    }
    return {lo, hi};
}

/// Spectral (operator 2-) norm of a row-major d-by-d matrix.
inline double spectral_norm(std::span<const double> a, std::size_t d) {
    if (d == 1) return std::fabs(a[0]);
    std::vector<double> ata(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += a[k * d + i] * a[k * d + j];
            ata[i * d + j] = s;
        }
    const EigRange r = sym_eig_range(ata, d);
    return std::sqrt(std::max(0.0, r.max_eig));
}

/// Solves a tridiagonal system in place (Thomas algorithm).
/// lower[0] and upper[n-1] are ignored. Requires nonzero pivots, which the
/// assembly monotonicity check guarantees for the corrector systems.
inline std::vector<double> tridiag_solve(std::span<const double> lower,
                                         std::span<const double> diag,
                                         std::span<const double> upper,
                                         std::span<const double> rhs) {
    const std::size_t n = diag.size();
    std::vector<double> c(n), x(n);
    double piv = diag[0];
    if (piv == 0.0) throw LinearSolveFailure("tridiagonal pivot is zero at row 0");
    c[0] = upper[0] / piv;
    x[0] = rhs[0] / piv;
    for (std::size_t i = 1; i < n; ++i) {
        piv = diag[i] - lower[i] * c[i - 1];
        if (piv == 0.0)
            throw LinearSolveFailure("tridiagonal pivot is zero at row " + std::to_string(i));
        c[i] = (i + 1 < n) ? upper[i] / piv : 0.0;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / piv;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
    return x;
}

/// Compressed sparse row matrix, assembled row by row.
struct CsrMatrix {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr;  // n + 1
    std::vector<std::size_t> col;
    std::vector<double> val;

    void reserve_rows(std::size_t rows, std::size_t nnz_hint) {
        n = rows;
        row_ptr.assign(1, 0);
        row_ptr.reserve(rows + 1);
        col.reserve(nnz_hint);
        val.reserve(nnz_hint);
    }
    void add_entry(std::size_t j, double v) {
        col.push_back(j);
        val.push_back(v);
    }
    void end_row() { row_ptr.push_back(col.size()); }

    void multiply(std::span<const double> x, std::span<double> y) const {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
            y[i] = s;
        }
    }
    double diagonal(std::size_t i) const {
        for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (col[k] == i) return val[k];
        return 0.0;
    }
};

/// Jacobi-preconditioned BiCGStab. Returns the solution with relative
/// residual ||b - Ax|| / ||b|| <= tol, else throws LinearSolveFailure.
inline std::vector<double> bicgstab_solve(const CsrMatrix& a, std::span<const double> b,
                                          double tol, std::size_t max_iter) {
    const std::size_t n = a.n;
    std::vector<double> x(n, 0.0), r(n), r0(n), p(n, 0.0), v(n, 0.0), s(n), t(n), z(n), y(n);
    std::vector<double> dinv(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.diagonal(i);
        dinv[i] = (d != 0.0) ? 1.0 / d : 1.0;
    }
    const double bnorm = norm2(b);
    if (bnorm == 0.0) return x;
    r.assign(b.begin(), b.end());
    r0 = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const double rho1 = dot(r0, r);
        if (rho1 == 0.0) break;
        if (it == 0) {
            p = r;
        } else {
            const double beta = (rho1 / rho) * (alpha / omega);
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho1;
        for (std::size_t i = 0; i < n; ++i) y[i] = dinv[i] * p[i];
        a.multiply(y, v);
        alpha = rho / dot(r0, v);
        for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        if (norm2(s) / bnorm <= tol) {
            for (std::size_t i = 0; i < n; ++i) x[i] += alpha * y[i];
            break;
        }
        for (std::size_t i = 0; i < n; ++i) z[i] = dinv[i] * s[i];
        a.multiply(z, t);
        const double tt = dot(t, t);
        omega = (tt != 0.0) ? dot(t, s) / tt : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if (norm2(r) / bnorm <= tol) break;
        if (omega == 0.0) break;
    }
    // Always verify the true residual; iterative recurrences can drift.
    a.multiply(x, t);
    double rn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = b[i] - t[i];
        rn += d * d;
    }
    rn = std::sqrt(rn) / bnorm;
    if (!(rn <= tol))
        throw LinearSolveFailure("BiCGStab stalled at relative residual " + std::to_string(rn));
    return x;
}

}  // namespace zvonkin
