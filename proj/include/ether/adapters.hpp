// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ether/rng.hpp"
#include "ether/tensor.hpp"

namespace ether {

enum class Method { Ether, EtherPlus, Oft, Naive, Lora };

std::string to_string(Method method);
Method method_from_string(const std::string& name);
const std::vector<Method>& all_methods();

// --- factor constructors ---------------------------------------------------

// Hyperplane reflection I - 2*u*u^T from an unnormalized direction.
// Differentiable w.r.t. u_raw through the normalization.
Tensor householder(const Tensor& u_raw);

// Relaxed reflection I - u*u^T + v*v^T from two unnormalized directions.
// Equals the identity when u_raw and v_raw coincide.
Tensor ether_plus_factor(const Tensor& u_raw, const Tensor& v_raw);

// Orthogonal matrix (I + S)(I - S)^{-1} with S = (R - R^T)/2.
// Always has determinant +1; R = 0 maps to the identity.
Tensor cayley(const Tensor& r);

// --- adapters ----------------------------------------------------------

struct AdapterConfig {
    Method method = Method::Ether;
    std::size_t blocks = 1;   // block-diagonal count n
    std::size_t rank = 4;     // LoRA rank r
    bool two_sided = true;    // ETHER+ only
};

// A trainable transformation attached to one frozen linear layer.
class Adapter {
public:
    virtual ~Adapter() = default;

    virtual Method method() const = 0;
    virtual std::size_t blocks() const { return 1; }
    virtual bool two_sided() const { return false; }
    // Additive adapters perturb W by a delta instead of multiplying it.
    virtual bool additive() const { return false; }

    // T(W) (or W + delta), recorded on the tape so gradients reach the
    // adapter parameters. W itself stays frozen.
    virtual Tensor transform_weight(const Tensor& w) const = 0;

    virtual std::vector<std::pair<std::string, Tensor>> named_parameters() const = 0;
    std::vector<Tensor> parameters() const;
    virtual std::size_t param_count() const = 0;

    // Dense multiplicative factors, evaluated off-tape: ETHER/OFT/Naive
    // return {left}; two-sided ETHER+ returns {left, right}; LoRA returns {}.
    virtual std::vector<Tensor> dense_factors() const = 0;

    // ||T_i - I||_F for each individual block factor (left blocks first,
    // then right blocks). Empty for additive adapters.
    virtual std::vector<double> block_factor_distances() const;
};

class EtherAdapter final : public Adapter {
public:
    EtherAdapter(std::size_t d, std::size_t n, Rng& rng);

    Method method() const override { return Method::Ether; }
    std::size_t blocks() const override { return planes_.size(); }
    Tensor transform_weight(const Tensor& w) const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t param_count() const override;
    std::vector<Tensor> dense_factors() const override;
    std::vector<double> block_factor_distances() const override;

    const std::vector<Tensor>& raw_planes() const { return planes_; }
    std::vector<Tensor>& raw_planes() { return planes_; }

private:
    std::vector<Tensor> block_factors() const;
    std::vector<Tensor> planes_; // n unnormalized directions of length d/n
};

class EtherPlusAdapter final : public Adapter {
public:
    EtherPlusAdapter(std::size_t d, std::size_t f, std::size_t n, bool two_sided, Rng& rng);

    Method method() const override { return Method::EtherPlus; }
    std::size_t blocks() const override { return left_u_.size(); }
    bool two_sided() const override { return two_sided_; }
    Tensor transform_weight(const Tensor& w) const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t param_count() const override;
    std::vector<Tensor> dense_factors() const override;
    std::vector<double> block_factor_distances() const override;

    // Test/perturbation access to the raw direction pairs.
    std::vector<Tensor>& left_u() { return left_u_; }
    std::vector<Tensor>& left_v() { return left_v_; }
    std::vector<Tensor>& right_u() { return right_u_; }
    std::vector<Tensor>& right_v() { return right_v_; }

private:
    std::vector<Tensor> left_factors() const;
    std::vector<Tensor> right_factors() const;
    std::vector<Tensor> left_u_, left_v_;   // n blocks of length d/n
    std::vector<Tensor> right_u_, right_v_; // n blocks of length f/n (two-sided)
    bool two_sided_ = true;
};

class OftAdapter final : public Adapter {
public:
    OftAdapter(std::size_t d, std::size_t n);

    Method method() const override { return Method::Oft; }
    std::size_t blocks() const override { return r_blocks_.size(); }
    Tensor transform_weight(const Tensor& w) const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t param_count() const override;
    std::vector<Tensor> dense_factors() const override;

    std::vector<Tensor>& r_blocks() { return r_blocks_; }

private:
    std::vector<Tensor> block_factors() const;
    std::vector<Tensor> r_blocks_; // n matrices of shape (d/n, d/n), zero-init
};

class NaiveAdapter final : public Adapter {
public:
    NaiveAdapter(std::size_t d, std::size_t n);

    Method method() const override { return Method::Naive; }
    std::size_t blocks() const override { return n_blocks_.size(); }
    Tensor transform_weight(const Tensor& w) const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t param_count() const override;
    std::vector<Tensor> dense_factors() const override;

    std::vector<Tensor>& n_blocks() { return n_blocks_; }

private:
    std::vector<Tensor> n_blocks_; // n matrices of shape (d/n, d/n), identity-init
};

class LoraAdapter final : public Adapter {
public:
    LoraAdapter(std::size_t d, std::size_t f, std::size_t rank, Rng& rng);

    Method method() const override { return Method::Lora; }
    bool additive() const override { return true; }
    Tensor transform_weight(const Tensor& w) const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t param_count() const override;
    std::vector<Tensor> dense_factors() const override { return {}; }

    // alpha/r * A*B, evaluated off-tape.
    Tensor delta() const;
    std::size_t rank() const { return rank_; }

    Tensor& a() { return a_; }
    Tensor& b() { return b_; }

private:
    Tensor a_;  // d x r, Gaussian init
    Tensor b_;  // r x f, zero init
    std::size_t rank_;
    double alpha_;
};

// Builds an adapter for a d-by-f layer: OFT/Naive start at the exact
// identity, LoRA at zero delta, ETHER+ with v = u (identity), ETHER with
// random unit reflections. Throws ConfigError on divisibility/rank
// violations.
std::unique_ptr<Adapter> make_adapter(const AdapterConfig& config, std::size_t d,
                                      std::size_t f, Rng& rng);

// --- adapted layer -----------------------------------------------------

// Frozen linear layer with an optional trainable adapter. Forward follows
// the row-vector convention: Y = X * T(W) + b for X of shape [batch x d].
struct AdaptedLinear {
    Tensor w; // [d x f], frozen
    Tensor b; // [f], frozen
    std::shared_ptr<Adapter> adapter; // null: plain layer

    std::size_t in_dim() const { return w.shape()[0]; }
    std::size_t out_dim() const { return w.shape()[1]; }

    Tensor forward(const Tensor& x) const;
};

// T(W) materialized off-tape: a plain layer with the returned weight
// reproduces the adapted forward.
Tensor merge(const AdaptedLinear& layer);

} // namespace ether
