// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "ether/adapters.hpp"
#include "ether/tensor.hpp"

namespace ether {

double frobenius_norm(const Tensor& t);
double frobenius_distance(const Tensor& a, const Tensor& b);

// ||T*T^T - I||_F for a square T; zero exactly when T is orthogonal.
double orthogonality_residual(const Tensor& t);

double determinant(const Tensor& t);

// ||T - I||_F summed over the adapter's dense factors. LoRA reports the
// additive analogue ||delta||_F instead; callers labelling output should
// flag it as incomparable to multiplicative distances.
double transformation_distance(const Adapter& adapter);

double weights_distance(const Tensor& w, const Tensor& w_prime);

// Riesz energy of the L2-normalized columns: sum over pairs of
// 1/||wi - wj||^exponent. Pairwise separations below the clamp floor are
// clamped and counted. Invariant under any orthogonal left factor.
struct EnergyResult {
    double value = 0.0;
    std::size_t clamped_pairs = 0;
};

inline constexpr double kEnergyDistanceFloor = 1e-9;

EnergyResult hyperspherical_energy(const Tensor& w, double exponent = 1.0);

// Exact per-layer trainable parameter counts:
//   ether d | etherplus 2d (+2f two-sided) | lora r(d+f) | oft/naive d^2/n.
// OFT is counted as true trainable entries; the halved storage convention
// used elsewhere for skew-symmetric parametrizations is noted in reports.
std::size_t param_count(Method method, std::size_t d, std::size_t f, std::size_t n,
                        std::size_t r, bool two_sided);

// Multiplication/addition tallies for applying a d x d block-diagonal
// factor with n blocks to a d x f weight; n = 1 is the dense product.
struct OpCount {
    std::uint64_t multiplications = 0;
    std::uint64_t additions = 0;
};

OpCount op_count(std::size_t d, std::size_t f, std::size_t n);

struct MetricsRecord {
    std::string method;
    std::size_t n = 1;
    double transform_distance = 0.0;
    double weights_distance = 0.0;
    double delta_he = 0.0;
    std::size_t param_count = 0;
    OpCount ops;
    double max_block_factor_distance = 0.0;
    std::size_t clamped_pairs = 0;
};

// Full measurement of one adapted layer against its pretrained weight.
MetricsRecord measure_layer(const Adapter& adapter, const Tensor& w0,
                            const Tensor& merged, double he_exponent = 1.0);

} // namespace ether
