// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace ether {

// Plain-buffer helpers on row-major square matrices (no tape participation).

// Inverse via LU with partial pivoting; throws NumericError when singular.
std::vector<double> dense_inverse(const std::vector<double>& a, std::size_t n);

// Determinant via LU with partial pivoting (0 for singular input).
double dense_determinant(std::vector<double> a, std::size_t n);

} // namespace ether
