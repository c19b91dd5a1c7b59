// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ether {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

namespace detail {

// One recorded operation result. The DAG of nodes is the define-by-run tape:
// leaves have no parents, interior nodes keep their inputs alive through
// shared ownership and know how to push gradients back to them.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until needed; same length as data once allocated
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(const TensorNode&)> backprop;

    std::size_t size() const { return data.size(); }
    void ensure_grad();
    void accumulate(const std::vector<double>& g);
};

} // namespace detail

// Dense row-major double tensor participating in reverse-mode autodiff.
// Copying a Tensor copies the handle; the underlying node is shared.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor identity(std::size_t n);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }

    // 2-d accessors; throw ContractError on rank mismatch.
    std::size_t rows() const;
    std::size_t cols() const;

    bool requires_grad() const;
    void set_requires_grad(bool value);

    const std::vector<double>& data() const;
    // In-place edit of a leaf's values (the graph is rebuilt every step, so
    // mutating leaves between steps is safe).
    std::vector<double>& mutable_data();

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    double value() const;                       // scalar nodes only
    double at(std::size_t r, std::size_t c) const; // 2-d nodes only

    // Deep copy as a detached leaf (no parents, no backprop).
    Tensor clone(bool requires_grad = false) const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op_result(Shape shape, std::vector<double> data,
                                 std::vector<Tensor> parents,
                                 std::function<void(const detail::TensorNode&)> backprop);
};

// Topologically ordered view of every node reachable from a root: each
// node's parents appear before it. Raw pointers; the root keeps them alive.
struct Tape {
    std::vector<const detail::TensorNode*> nodes;
};

Tape build_tape(const Tensor& root);

// Populates grad on every requires_grad node reachable from loss.
// Gradients accumulate across calls until zero_grad.
void backward(const Tensor& loss);

// --- operations --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor outer(const Tensor& u, const Tensor& v);
Tensor normalize(const Tensor& u);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);

Tensor transpose(const Tensor& a);
Tensor inverse(const Tensor& a);
Tensor sum(const Tensor& a);
// Adds a length-n row vector to every row of an m-by-n matrix.
Tensor add_row(const Tensor& matrix, const Tensor& row);

Tensor loss_mse(const Tensor& pred, const Tensor& target);

// Applies per-block square factors to contiguous row (left) or column
// (right) slices of a d-by-f matrix; equivalent to multiplying by the dense
// block-diagonal matrix assembled from the same blocks. Blocks must be
// square, equally sized, and tile the corresponding dimension exactly.
Tensor block_apply_left(const std::vector<Tensor>& blocks, const Tensor& w);
Tensor block_apply_right(const Tensor& w, const std::vector<Tensor>& blocks);

// Dense block-diagonal assembly of equally sized square blocks.
Tensor build_block_diagonal(const std::vector<Tensor>& blocks);

} // namespace ether
