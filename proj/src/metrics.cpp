// SPDX-License-Identifier: Apache-2.0

#include "ether/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ether/errors.hpp"
#include "ether/linalg.hpp"

namespace ether {

double frobenius_norm(const Tensor& t) {
    double acc = 0.0;
    for (const double x : t.data()) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

double frobenius_distance(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("frobenius_distance: shapes disagree: " +
                             shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
    const auto& av = a.data();
    const auto& bv = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double diff = av[i] - bv[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double orthogonality_residual(const Tensor& t) {
    const std::size_t n = t.rows();
    if (t.cols() != n) {
        throw DimensionError("orthogonality_residual: matrix is not square: " +
                             shape_to_string(t.shape()));
    }
    const auto& tv = t.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                dot += tv[i * n + k] * tv[j * n + k];
            }
            const double diff = dot - (i == j ? 1.0 : 0.0);
            acc += diff * diff;
        }
    }
    return std::sqrt(acc);
}

double determinant(const Tensor& t) {
    const std::size_t n = t.rows();
    if (t.cols() != n) {
        throw DimensionError("determinant: matrix is not square: " +
                             shape_to_string(t.shape()));
    }
    return dense_determinant(t.data(), n);
}

double transformation_distance(const Adapter& adapter) {
    if (adapter.additive()) {
        const auto* lora = dynamic_cast<const LoraAdapter*>(&adapter);
        return lora ? frobenius_norm(lora->delta()) : 0.0;
    }
    double total = 0.0;
    for (const auto& factor : adapter.dense_factors()) {
        total += frobenius_distance(factor, Tensor::identity(factor.rows()));
    }
    return total;
}

double weights_distance(const Tensor& w, const Tensor& w_prime) {
    return frobenius_distance(w, w_prime);
}

EnergyResult hyperspherical_energy(const Tensor& w, double exponent) {
    const std::size_t d = w.rows();
    const std::size_t f = w.cols();
    const auto& wv = w.data();

    // Normalize the columns (the neuron vectors under left multiplication).
    std::vector<double> cols(d * f);
    for (std::size_t j = 0; j < f; ++j) {
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            sq += wv[i * f + j] * wv[i * f + j];
        }
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0)) {
            throw DegenerateVectorError("hyperspherical_energy: column " +
                                        std::to_string(j) + " has zero norm");
        }
        for (std::size_t i = 0; i < d; ++i) {
            cols[j * d + i] = wv[i * f + j] / norm;
        }
    }

    EnergyResult result;
    for (std::size_t a = 0; a < f; ++a) {
        for (std::size_t b = a + 1; b < f; ++b) {
            double sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = cols[a * d + i] - cols[b * d + i];
                sq += diff * diff;
            }
            double dist = std::sqrt(sq);
            if (dist < kEnergyDistanceFloor) {
                dist = kEnergyDistanceFloor;
                ++result.clamped_pairs;
            }
            result.value += exponent == 1.0 ? 1.0 / dist : std::pow(dist, -exponent);
        }
    }
    return result;
}

std::size_t param_count(Method method, std::size_t d, std::size_t f, std::size_t n,
                        std::size_t r, bool two_sided) {
    switch (method) {
        case Method::Ether:
            if (n == 0 || d % n != 0) {
                throw ConfigError("param_count: n must divide d");
            }
            return d;
        case Method::EtherPlus:
            if (n == 0 || d % n != 0 || (two_sided && f % n != 0)) {
                throw ConfigError("param_count: n must divide d (and f when two-sided)");
            }
            return two_sided ? 2 * (d + f) : 2 * d;
        case Method::Lora:
            if (r == 0) {
                throw ConfigError("param_count: lora rank must be at least 1");
            }
            return r * (d + f);
        case Method::Oft:
        case Method::Naive:
            if (n == 0 || d % n != 0) {
                throw ConfigError("param_count: n must divide d");
            }
            return (d / n) * d;
    }
    throw ConfigError("param_count: unhandled method");
}

MetricsRecord measure_layer(const Adapter& adapter, const Tensor& w0,
                            const Tensor& merged, double he_exponent) {
    const std::size_t d = w0.rows();
    const std::size_t f = w0.cols();
    MetricsRecord record;
    record.method = to_string(adapter.method());
    record.n = adapter.blocks();
    record.transform_distance = transformation_distance(adapter);
    record.weights_distance = weights_distance(w0, merged);
    record.param_count = adapter.param_count();
    record.ops = adapter.additive() ? OpCount{} : op_count(d, f, adapter.blocks());
    for (const double dist : adapter.block_factor_distances()) {
        record.max_block_factor_distance =
            std::max(record.max_block_factor_distance, dist);
    }
    bool finite = true;
    for (const double v : merged.data()) {
        finite = finite && std::isfinite(v);
    }
    if (finite) {
        const EnergyResult before = hyperspherical_energy(w0, he_exponent);
        const EnergyResult after = hyperspherical_energy(merged, he_exponent);
        record.delta_he = after.value - before.value;
        record.clamped_pairs = before.clamped_pairs + after.clamped_pairs;
    } else {
        record.delta_he = std::numeric_limits<double>::quiet_NaN();
    }
    return record;
}

OpCount op_count(std::size_t d, std::size_t f, std::size_t n) {
    if (n == 0 || d % n != 0) {
        throw ConfigError("op_count: n must divide d");
    }
    const std::uint64_t m = d / n;
    OpCount out;
    // n blocks, each (d/n)((d/n)f) multiplications and ((d-1)/n)((d/n)f)
    // additions; n = 1 recovers the dense d(df) and (d-1)df tallies.
    out.multiplications = static_cast<std::uint64_t>(d) * m * f;
    out.additions = static_cast<std::uint64_t>(d - 1) * m * f;
    return out;
}

} // namespace ether
