#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "climbing/error.hpp"

namespace climbing {

// Solves A x = rhs for a tridiagonal A given by its three diagonals
// (lower[i] = A[i+1][i], diag[i] = A[i][i], upper[i] = A[i][i+1]) using
// forward elimination and back substitution without pivoting. Linear in n.
// Stable for diagonally dominant or definite systems, which is what the
// climber Hessians are.
inline std::vector<double> solve_tridiagonal(std::span<const double> lower,
                                             std::span<const double> diag,
                                             std::span<const double> upper,
                                             std::span<const double> rhs) {
    const std::size_t n = diag.size();
    if (rhs.size() != n || (n > 0 && (lower.size() != n - 1 || upper.size() != n - 1))) {
        throw ValidationError("solve_tridiagonal: inconsistent diagonal lengths");
    }
    std::vector<double> x(n);
    if (n == 0) return x;

    std::vector<double> c_prime(n);
    double pivot = diag[0];
    if (pivot == 0.0 || !std::isfinite(pivot)) throw SolverError("solve_tridiagonal: singular system");
    c_prime[0] = n > 1 ? upper[0] / pivot : 0.0;
    x[0] = rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = diag[i] - lower[i - 1] * c_prime[i - 1];
        if (pivot == 0.0 || !std::isfinite(pivot)) throw SolverError("solve_tridiagonal: singular system");
        c_prime[i] = i + 1 < n ? upper[i] / pivot : 0.0;
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / pivot;
    }
    for (std::size_t i = n - 1; i-- > 0;) {
        x[i] -= c_prime[i] * x[i + 1];
    }
    return x;
}

} // namespace climbing
