// SPDX-License-Identifier: Apache-2.0

#include "ether/adapters.hpp"

#include <cmath>
#include <utility>

#include "ether/errors.hpp"

namespace ether {

namespace {

void check_divides(std::size_t n, std::size_t dim, const char* what) {
    if (n == 0 || dim % n != 0) {
        throw ConfigError(std::string("adapter: block count ") + std::to_string(n) +
                          " does not divide " + what + " dimension " +
                          std::to_string(dim));
    }
}

double factor_identity_distance(const Tensor& factor) {
    const std::size_t n = factor.rows();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = factor.at(i, j) - (i == j ? 1.0 : 0.0);
            acc += diff * diff;
        }
    }
    return std::sqrt(acc);
}

} // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::Ether: return "ether";
        case Method::EtherPlus: return "etherplus";
        case Method::Oft: return "oft";
        case Method::Naive: return "naive";
        case Method::Lora: return "lora";
    }
    return "unknown";
}

Method method_from_string(const std::string& name) {
    for (const Method m : all_methods()) {
        if (to_string(m) == name) {
            return m;
        }
    }
    if (name == "ether+") { // common spelling
        return Method::EtherPlus;
    }
    throw ConfigError("unknown method '" + name +
                      "' (expected ether, etherplus, oft, naive, or lora)");
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods = {
        Method::Ether, Method::EtherPlus, Method::Oft, Method::Naive, Method::Lora};
    return methods;
}

// --- factor constructors ---------------------------------------------------

Tensor householder(const Tensor& u_raw) {
    const Tensor u = normalize(u_raw);
    const std::size_t d = u.size();
    return sub(Tensor::identity(d), scale(outer(u, u), 2.0));
}

Tensor ether_plus_factor(const Tensor& u_raw, const Tensor& v_raw) {
    const Tensor u = normalize(u_raw);
    const Tensor v = normalize(v_raw);
    const std::size_t d = u.size();
    return add(sub(Tensor::identity(d), outer(u, u)), outer(v, v));
}

Tensor cayley(const Tensor& r) {
    const std::size_t m = r.rows();
    if (r.cols() != m) {
        throw DimensionError("cayley: matrix is not square: " + shape_to_string(r.shape()));
    }
    const Tensor s = scale(sub(r, transpose(r)), 0.5);
    const Tensor eye = Tensor::identity(m);
    // (I - S) is invertible for every real skew-symmetric S.
    return matmul(add(eye, s), inverse(sub(eye, s)));
}

// --- Adapter base ---------------------------------------------------------

std::vector<Tensor> Adapter::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        out.push_back(t);
    }
    return out;
}

std::vector<double> Adapter::block_factor_distances() const {
    return {};
}

// --- ETHER ----------------------------------------------------------------

EtherAdapter::EtherAdapter(std::size_t d, std::size_t n, Rng& rng) {
    check_divides(n, d, "row");
    const std::size_t m = d / n;
    planes_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        planes_.push_back(Tensor::from_data({m}, rng.normal_vector(m), true));
    }
}

std::vector<Tensor> EtherAdapter::block_factors() const {
    std::vector<Tensor> factors;
    factors.reserve(planes_.size());
    for (const auto& p : planes_) {
        factors.push_back(householder(p));
    }
    return factors;
}

Tensor EtherAdapter::transform_weight(const Tensor& w) const {
    return block_apply_left(block_factors(), w);
}

std::vector<std::pair<std::string, Tensor>> EtherAdapter::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < planes_.size(); ++i) {
        out.emplace_back("plane" + std::to_string(i), planes_[i]);
    }
    return out;
}

std::size_t EtherAdapter::param_count() const {
    std::size_t total = 0;
    for (const auto& p : planes_) {
        total += p.size();
    }
    return total; // n * (d/n) = d for every n
}

std::vector<Tensor> EtherAdapter::dense_factors() const {
    return {build_block_diagonal(block_factors()).clone()};
}

std::vector<double> EtherAdapter::block_factor_distances() const {
    std::vector<double> out;
    for (const auto& factor : block_factors()) {
        out.push_back(factor_identity_distance(factor));
    }
    return out;
}

// --- ETHER+ -----------------------------------------------------------------

EtherPlusAdapter::EtherPlusAdapter(std::size_t d, std::size_t f, std::size_t n,
                                   bool two_sided, Rng& rng)
    : two_sided_(two_sided) {
    check_divides(n, d, "row");
    const std::size_t m = d / n;
    for (std::size_t i = 0; i < n; ++i) {
        auto raw = rng.normal_vector(m);
        left_u_.push_back(Tensor::from_data({m}, raw, true));
        // v starts as an exact copy of u so the factor is the identity.
        left_v_.push_back(Tensor::from_data({m}, raw, true));
    }
    if (two_sided_) {
        check_divides(n, f, "column");
        const std::size_t mf = f / n;
        for (std::size_t i = 0; i < n; ++i) {
            auto raw = rng.normal_vector(mf);
            right_u_.push_back(Tensor::from_data({mf}, raw, true));
            right_v_.push_back(Tensor::from_data({mf}, raw, true));
        }
    }
}

std::vector<Tensor> EtherPlusAdapter::left_factors() const {
    std::vector<Tensor> factors;
    factors.reserve(left_u_.size());
    for (std::size_t i = 0; i < left_u_.size(); ++i) {
        factors.push_back(ether_plus_factor(left_u_[i], left_v_[i]));
    }
    return factors;
}

std::vector<Tensor> EtherPlusAdapter::right_factors() const {
    std::vector<Tensor> factors;
    factors.reserve(right_u_.size());
    for (std::size_t i = 0; i < right_u_.size(); ++i) {
        factors.push_back(ether_plus_factor(right_u_[i], right_v_[i]));
    }
    return factors;
}

Tensor EtherPlusAdapter::transform_weight(const Tensor& w) const {
    Tensor out = block_apply_left(left_factors(), w);
    if (two_sided_) {
        out = block_apply_right(out, right_factors());
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> EtherPlusAdapter::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < left_u_.size(); ++i) {
        out.emplace_back("left_u" + std::to_string(i), left_u_[i]);
        out.emplace_back("left_v" + std::to_string(i), left_v_[i]);
    }
    for (std::size_t i = 0; i < right_u_.size(); ++i) {
        out.emplace_back("right_u" + std::to_string(i), right_u_[i]);
        out.emplace_back("right_v" + std::to_string(i), right_v_[i]);
    }
    return out;
}

std::size_t EtherPlusAdapter::param_count() const {
    std::size_t total = 0;
    for (const auto& t : left_u_) total += 2 * t.size();
    for (const auto& t : right_u_) total += 2 * t.size();
    return total; // 2d (+ 2f when two-sided)
}

std::vector<Tensor> EtherPlusAdapter::dense_factors() const {
    std::vector<Tensor> out;
    out.push_back(build_block_diagonal(left_factors()).clone());
    if (two_sided_) {
        out.push_back(build_block_diagonal(right_factors()).clone());
    }
    return out;
}

std::vector<double> EtherPlusAdapter::block_factor_distances() const {
    std::vector<double> out;
    for (const auto& factor : left_factors()) {
        out.push_back(factor_identity_distance(factor));
    }
    for (const auto& factor : right_factors()) {
        out.push_back(factor_identity_distance(factor));
    }
    return out;
}

// --- OFT ---------------------------------------------------------------------

OftAdapter::OftAdapter(std::size_t d, std::size_t n) {
    check_divides(n, d, "row");
    const std::size_t m = d / n;
    r_blocks_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Zero R gives Q = I: finetuning starts at the unchanged weight.
        r_blocks_.push_back(Tensor::zeros({m, m}, true));
    }
}

std::vector<Tensor> OftAdapter::block_factors() const {
    std::vector<Tensor> factors;
    factors.reserve(r_blocks_.size());
    for (const auto& r : r_blocks_) {
        factors.push_back(cayley(r));
    }
    return factors;
}

Tensor OftAdapter::transform_weight(const Tensor& w) const {
    return block_apply_left(block_factors(), w);
}

std::vector<std::pair<std::string, Tensor>> OftAdapter::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < r_blocks_.size(); ++i) {
        out.emplace_back("r" + std::to_string(i), r_blocks_[i]);
    }
    return out;
}

std::size_t OftAdapter::param_count() const {
    std::size_t total = 0;
    for (const auto& r : r_blocks_) {
        total += r.size();
    }
    return total; // n * (d/n)^2 = d^2/n trainable entries
}

std::vector<Tensor> OftAdapter::dense_factors() const {
    return {build_block_diagonal(block_factors()).clone()};
}

// --- Naive ---------------------------------------------------------------

NaiveAdapter::NaiveAdapter(std::size_t d, std::size_t n) {
    check_divides(n, d, "row");
    const std::size_t m = d / n;
    n_blocks_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        n_blocks_.push_back(Tensor::identity(m).clone(true));
    }
}

Tensor NaiveAdapter::transform_weight(const Tensor& w) const {
    return block_apply_left(n_blocks_, w);
}

std::vector<std::pair<std::string, Tensor>> NaiveAdapter::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < n_blocks_.size(); ++i) {
        out.emplace_back("n" + std::to_string(i), n_blocks_[i]);
    }
    return out;
}

std::size_t NaiveAdapter::param_count() const {
    std::size_t total = 0;
    for (const auto& b : n_blocks_) {
        total += b.size();
    }
    return total;
}

std::vector<Tensor> NaiveAdapter::dense_factors() const {
    return {build_block_diagonal(n_blocks_).clone()};
}

// --- LoRA ---------------------------------------------------------------

LoraAdapter::LoraAdapter(std::size_t d, std::size_t f, std::size_t rank, Rng& rng)
    : rank_(rank), alpha_(static_cast<double>(rank)) {
    if (rank == 0) {
        throw ConfigError("lora: rank must be at least 1");
    }
    a_ = Tensor::from_data({d, rank}, rng.normal_vector(d * rank, std::sqrt(1.0 / d)), true);
    b_ = Tensor::zeros({rank, f}, true); // zero B: the delta starts exactly at zero
}

Tensor LoraAdapter::transform_weight(const Tensor& w) const {
    return add(w, scale(matmul(a_, b_), alpha_ / static_cast<double>(rank_)));
}

std::vector<std::pair<std::string, Tensor>> LoraAdapter::named_parameters() const {
    return {{"a", a_}, {"b", b_}};
}

std::size_t LoraAdapter::param_count() const {
    return a_.size() + b_.size(); // r * (d + f)
}

Tensor LoraAdapter::delta() const {
    return scale(matmul(a_.clone(), b_.clone()), alpha_ / static_cast<double>(rank_));
}

// --- factory / layer -----------------------------------------------------

std::unique_ptr<Adapter> make_adapter(const AdapterConfig& config, std::size_t d,
                                      std::size_t f, Rng& rng) {
    switch (config.method) {
        case Method::Ether:
            return std::make_unique<EtherAdapter>(d, config.blocks, rng);
        case Method::EtherPlus:
            return std::make_unique<EtherPlusAdapter>(d, f, config.blocks,
                                                      config.two_sided, rng);
        case Method::Oft:
            return std::make_unique<OftAdapter>(d, config.blocks);
        case Method::Naive:
            return std::make_unique<NaiveAdapter>(d, config.blocks);
        case Method::Lora:
            return std::make_unique<LoraAdapter>(d, f, config.rank, rng);
    }
    throw ConfigError("make_adapter: unhandled method");
}

Tensor AdaptedLinear::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.shape()[1] != in_dim()) {
        throw DimensionError("AdaptedLinear: input shape " + shape_to_string(x.shape()) +
                             " does not match weight " + shape_to_string(w.shape()));
    }
    const Tensor weight = adapter ? adapter->transform_weight(w) : w;
    return add_row(matmul(x, weight), b);
}

Tensor merge(const AdaptedLinear& layer) {
    if (!layer.adapter) {
        return layer.w.clone();
    }
    // W is frozen, so the transform carries no gradient state to strip.
    return layer.adapter->transform_weight(layer.w).clone();
}

} // namespace ether
