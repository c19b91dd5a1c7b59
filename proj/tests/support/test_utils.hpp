// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ether/rng.hpp"
#include "ether/tensor.hpp"

namespace testutil {

inline ether::Tensor random_tensor(ether::Rng& rng, ether::Shape shape,
                                   bool requires_grad = false) {
    std::size_t numel = 1;
    for (const auto d : shape) {
        numel *= d;
    }
    return ether::Tensor::from_data(std::move(shape), rng.normal_vector(numel),
                                    requires_grad);
}

// Independent dense multiply oracle (plain loops, no tape, no library path).
inline std::vector<double> ref_matmul(const std::vector<double>& a,
                                      const std::vector<double>& b, std::size_t m,
                                      std::size_t k, std::size_t p) {
    std::vector<double> out(m * p, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                acc += a[i * k + l] * b[l * p + j];
            }
            out[i * p + j] = acc;
        }
    }
    return out;
}

// Independent dense block-diagonal assembly oracle.
inline std::vector<double> ref_block_diagonal(const std::vector<std::vector<double>>& blocks,
                                              std::size_t m) {
    const std::size_t d = m * blocks.size();
    std::vector<double> out(d * d, 0.0);
    for (std::size_t blk = 0; blk < blocks.size(); ++blk) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                out[(blk * m + i) * d + (blk * m + j)] = blocks[blk][i * m + j];
            }
        }
    }
    return out;
}

// Central finite difference of a scalar-valued rebuild-every-call function
// w.r.t. one entry of a leaf tensor.
template <typename F>
double central_diff(const F& f, ether::Tensor& leaf, std::size_t index,
                    double step = 1e-6) {
    auto& data = leaf.mutable_data();
    const double saved = data[index];
    data[index] = saved + step;
    const double plus = f();
    data[index] = saved - step;
    const double minus = f();
    data[index] = saved;
    return (plus - minus) / (2.0 * step);
}

// Max relative error between tape gradients and central differences over
// every entry of every leaf. f() rebuilds the graph and returns the loss.
template <typename F>
double max_grad_rel_error(const F& f, std::vector<ether::Tensor> leaves,
                          double step = 1e-6) {
    for (auto& leaf : leaves) {
        leaf.zero_grad();
    }
    ether::backward(f());
    double worst = 0.0;
    for (auto& leaf : leaves) {
        const std::vector<double> grads = leaf.grad();
        for (std::size_t i = 0; i < grads.size(); ++i) {
            const double fd = central_diff([&] { return f().value(); }, leaf, i, step);
            const double denom = std::max({std::abs(fd), std::abs(grads[i]), 1e-6});
            worst = std::max(worst, std::abs(grads[i] - fd) / denom);
        }
    }
    return worst;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

} // namespace testutil
