// SPDX-License-Identifier: Apache-2.0

#include "ether/linalg.hpp"

#include <cmath>
#include <cstdlib>
#include <utility>

#include "ether/errors.hpp"

namespace ether {

namespace {

// In-place LU factorization with partial pivoting. Returns the permutation
// sign, or 0 if a pivot collapses to zero.
int lu_factor(std::vector<double>& a, std::size_t n, std::vector<std::size_t>& perm) {
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        perm[i] = i;
    }
    int sign = 1;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double cand = std::abs(a[r * n + col]);
            if (cand > best) {
                best = cand;
                pivot = r;
            }
        }
        if (best == 0.0 || !std::isfinite(best)) {
            return 0;
        }
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a[pivot * n + j], a[col * n + j]);
            }
            std::swap(perm[pivot], perm[col]);
            sign = -sign;
        }
        const double diag = a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[r * n + col] / diag;
            a[r * n + col] = factor;
            for (std::size_t j = col + 1; j < n; ++j) {
                a[r * n + j] -= factor * a[col * n + j];
            }
        }
    }
    return sign;
}

} // namespace

std::vector<double> dense_inverse(const std::vector<double>& a, std::size_t n) {
    std::vector<double> lu = a;
    std::vector<std::size_t> perm;
    if (lu_factor(lu, n, perm) == 0) {
        throw NumericError("dense_inverse: matrix is singular to working precision");
    }
    std::vector<double> inv(n * n, 0.0);
    std::vector<double> col(n);
    for (std::size_t rhs = 0; rhs < n; ++rhs) {
        // Forward substitution on the permuted unit vector.
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = (perm[i] == rhs) ? 1.0 : 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                col[i] -= lu[i * n + j] * col[j];
            }
        }
        for (std::size_t ii = n; ii-- > 0;) {
            for (std::size_t j = ii + 1; j < n; ++j) {
                col[ii] -= lu[ii * n + j] * col[j];
            }
            col[ii] /= lu[ii * n + ii];
            inv[ii * n + rhs] = col[ii];
        }
    }
    return inv;
}

double dense_determinant(std::vector<double> a, std::size_t n) {
    std::vector<std::size_t> perm;
    const int sign = lu_factor(a, n, perm);
    if (sign == 0) {
        return 0.0;
    }
    double det = sign;
    for (std::size_t i = 0; i < n; ++i) {
        det *= a[i * n + i];
    }
    return det;
}

} // namespace ether
