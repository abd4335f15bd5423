// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "zvonkin/errors.hpp"

namespace zvonkin {

/// Uniform tensor grid on [-radius, radius]^dim, dim in {1, 2}.
struct Grid {
    int dim = 1;
    double radius = 12.0;
    int n_per_axis = 4097;

    Grid() = default;
    Grid(int dim_, double radius_, int n_per_axis_)
        : dim(dim_), radius(radius_), n_per_axis(n_per_axis_) {
        if (dim != 1 && dim != 2)
            throw UnsupportedDimension("grid supports dim 1 or 2");
        if (n_per_axis < 33) throw PreconditionViolation("n_per_axis must be >= 33");
        if (!(radius > 0.0)) throw PreconditionViolation("grid radius must be positive");
    }

    double spacing() const { return 2.0 * radius / static_cast<double>(n_per_axis - 1); }
    double node(int i) const { return -radius + static_cast<double>(i) * spacing(); }
    std::size_t node_count() const {
        std::size_t n = static_cast<std::size_t>(n_per_axis);
        return (dim == 1) ? n : n * n;
    }
    /// Flat index; 2d nodes are x-major: idx = ix * n + iy.
    std::size_t index(int ix, int iy = 0) const {
        return (dim == 1) ? static_cast<std::size_t>(ix)
                          : static_cast<std::size_t>(ix) * n_per_axis + iy;
    }
    bool on_boundary(int ix, int iy = 0) const {
        if (ix == 0 || ix == n_per_axis - 1) return true;
        return dim == 2 && (iy == 0 || iy == n_per_axis - 1);
    }
};

}  // namespace zvonkin
