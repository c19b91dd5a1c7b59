// SPDX-License-Identifier: Apache-2.0

#include "ether/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "ether/errors.hpp"
#include "ether/linalg.hpp"

namespace ether {

namespace {

constexpr double kNormEpsilon = 1e-12;

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (const auto d : shape) {
        n *= d;
    }
    return n;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ContractError(std::string(what) + ": expected rank " +
                            std::to_string(rank) + ", got shape " +
                            shape_to_string(t.shape()));
    }
}

[[noreturn]] void throw_shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    throw DimensionError(std::string(op) + ": shapes disagree: " +
                         shape_to_string(a) + " vs " + shape_to_string(b));
}

} // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? " x " : "") << shape[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

void TensorNode::ensure_grad() {
    if (grad.size() != data.size()) {
        grad.assign(data.size(), 0.0);
    }
}

void TensorNode::accumulate(const std::vector<double>& g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
        grad[i] += g[i];
    }
}

} // namespace detail

// Central factory for op results: requires_grad propagates from parents and
// the tape is pruned wherever no gradient can flow.
Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> parents,
                      std::function<void(const detail::TensorNode&)> backprop) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs_grad = false;
    for (const auto& p : parents) {
        needs_grad = needs_grad || p.requires_grad();
    }
    node->requires_grad = needs_grad;
    if (needs_grad) {
        node->parents.reserve(parents.size());
        for (const auto& p : parents) {
            node->parents.push_back(p.node());
        }
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

// --- Tensor basics ------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ContractError("Tensor: shape " + shape_to_string(shape) +
                            " does not match data length " + std::to_string(data.size()));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    if (requires_grad) {
        node->ensure_grad();
    }
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
    std::vector<double> data(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        data[i * n + i] = 1.0;
    }
    return from_data({n, n}, std::move(data));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
    require_rank(*this, 2, "rows");
    return shape()[0];
}

std::size_t Tensor::cols() const {
    require_rank(*this, 2, "cols");
    return shape()[1];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
    node_->requires_grad = value;
    if (value) {
        node_->ensure_grad();
    }
}

const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::mutable_data() { return node_->data; }

bool Tensor::has_grad() const { return node_->grad.size() == node_->data.size(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) {
        throw ContractError("grad: no gradient recorded for this tensor");
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::value() const {
    if (size() != 1) {
        throw ContractError("value: tensor is not scalar, shape " +
                            shape_to_string(shape()));
    }
    return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    require_rank(*this, 2, "at");
    return node_->data[r * cols() + c];
}

Tensor Tensor::clone(bool requires_grad) const {
    return from_data(shape(), data(), requires_grad);
}

// --- tape ---------------------------------------------------------------

namespace {

void topo_visit(const std::shared_ptr<detail::TensorNode>& root,
                std::vector<detail::TensorNode*>& order) {
    std::unordered_set<const detail::TensorNode*> visited;
    // Iterative postorder; graphs can get deep over long training loops.
    std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            detail::TensorNode* parent = node->parents[next_child].get();
            ++next_child;
            if (visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

} // namespace

Tape build_tape(const Tensor& root) {
    std::vector<detail::TensorNode*> order;
    topo_visit(root.node(), order);
    Tape tape;
    tape.nodes.assign(order.begin(), order.end());
    return tape;
}

void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " +
                            shape_to_string(loss.shape()));
    }
    std::vector<detail::TensorNode*> order;
    topo_visit(loss.node(), order);

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;

    // Reverse topological sweep: every consumer has already deposited its
    // contribution by the time a node's backprop runs.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* node = *it;
        if (node->backprop && node->grad.size() == node->data.size()) {
            node->backprop(*node);
        }
    }
}

// --- elementwise helpers --------------------------------------------------

namespace {

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast classify_binary(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        return Broadcast::None;
    }
    if (a.size() == 1) {
        return Broadcast::LeftScalar;
    }
    if (b.size() == 1) {
        return Broadcast::RightScalar;
    }
    throw_shape_mismatch(op, a.shape(), b.shape());
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const Broadcast mode = classify_binary("add", a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    const std::size_t n = std::max(av.size(), bv.size());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = mode == Broadcast::LeftScalar ? av[0] : av[i];
        const double y = mode == Broadcast::RightScalar ? bv[0] : bv[i];
        out[i] = x + y;
    }
    Shape shape = mode == Broadcast::LeftScalar ? b.shape() : a.shape();
    return make_op_result(std::move(shape), std::move(out), {a, b},
        [mode](const detail::TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                if (mode == Broadcast::LeftScalar) {
                    for (const double g : self.grad) pa.grad[0] += g;
                } else {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
                }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                if (mode == Broadcast::RightScalar) {
                    for (const double g : self.grad) pb.grad[0] += g;
                } else {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
                }
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const Broadcast mode = classify_binary("sub", a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    const std::size_t n = std::max(av.size(), bv.size());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = mode == Broadcast::LeftScalar ? av[0] : av[i];
        const double y = mode == Broadcast::RightScalar ? bv[0] : bv[i];
        out[i] = x - y;
    }
    Shape shape = mode == Broadcast::LeftScalar ? b.shape() : a.shape();
    return make_op_result(std::move(shape), std::move(out), {a, b},
        [mode](const detail::TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                if (mode == Broadcast::LeftScalar) {
                    for (const double g : self.grad) pa.grad[0] += g;
                } else {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
                }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                if (mode == Broadcast::RightScalar) {
                    for (const double g : self.grad) pb.grad[0] -= g;
                } else {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
                }
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Broadcast mode = classify_binary("mul", a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    const std::size_t n = std::max(av.size(), bv.size());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = mode == Broadcast::LeftScalar ? av[0] : av[i];
        const double y = mode == Broadcast::RightScalar ? bv[0] : bv[i];
        out[i] = x * y;
    }
    Shape shape = mode == Broadcast::LeftScalar ? b.shape() : a.shape();
    return make_op_result(std::move(shape), std::move(out), {a, b},
        [mode](const detail::TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const auto& av = pa.data;
            const auto& bv = pb.data;
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    const double y = mode == Broadcast::RightScalar ? bv[0] : bv[i];
                    const std::size_t ai = mode == Broadcast::LeftScalar ? 0 : i;
                    pa.grad[ai] += self.grad[i] * y;
                }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    const double x = mode == Broadcast::LeftScalar ? av[0] : av[i];
                    const std::size_t bi = mode == Broadcast::RightScalar ? 0 : i;
                    pb.grad[bi] += self.grad[i] * x;
                }
            }
        });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.size());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] * factor;
    }
    return make_op_result(a.shape(), std::move(out), {a},
        [factor](const detail::TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[i] += self.grad[i] * factor;
            }
        });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] > 0.0 ? av[i] : 0.0;
    }
    return make_op_result(a.shape(), std::move(out), {a},
        [](const detail::TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                if (p.data[i] > 0.0) p.grad[i] += self.grad[i];
            }
        });
}

Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::tanh(av[i]);
    }
    return make_op_result(a.shape(), std::move(out), {a},
        [](const detail::TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double y = self.data[i];
                p.grad[i] += self.grad[i] * (1.0 - y * y);
            }
        });
}

// --- linear algebra ops ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t p = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner dimensions disagree: " +
                             shape_to_string(a.shape()) + " * " +
                             shape_to_string(b.shape()));
    }
    std::vector<double> out(m * p, 0.0);
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double x = av[i * k + l];
            if (x == 0.0) continue;
            const double* brow = &bv[l * p];
            double* orow = &out[i * p];
            for (std::size_t j = 0; j < p; ++j) {
                orow[j] += x * brow[j];
            }
        }
    }
    return make_op_result({m, p}, std::move(out), {a, b},
        [m, k, p](const detail::TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const auto& g = self.grad;
            if (pa.requires_grad) {
                pa.ensure_grad();
                // dL/da = g * b^T
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        const double* grow = &g[i * p];
                        const double* brow = &pb.data[l * p];
                        for (std::size_t j = 0; j < p; ++j) {
                            acc += grow[j] * brow[j];
                        }
                        pa.grad[i * k + l] += acc;
                    }
                }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                // dL/db = a^T * g
                for (std::size_t l = 0; l < k; ++l) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double x = pa.data[i * k + l];
                        if (x == 0.0) continue;
                        const double* grow = &g[i * p];
                        double* brow = &pb.grad[l * p];
                        for (std::size_t j = 0; j < p; ++j) {
                            brow[j] += x * grow[j];
                        }
                    }
                }
            }
        });
}

Tensor outer(const Tensor& u, const Tensor& v) {
    require_rank(u, 1, "outer lhs");
    require_rank(v, 1, "outer rhs");
    const std::size_t d = u.size();
    if (v.size() != d) {
        throw_shape_mismatch("outer", u.shape(), v.shape());
    }
    std::vector<double> out(d * d);
    const auto& uv = u.data();
    const auto& vv = v.data();
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = uv[i] * vv[j];
        }
    }
    return make_op_result({d, d}, std::move(out), {u, v},
        [d](const detail::TensorNode& self) {
            auto& pu = *self.parents[0];
            auto& pv = *self.parents[1];
            if (pu.requires_grad) {
                pu.ensure_grad();
                for (std::size_t i = 0; i < d; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        acc += self.grad[i * d + j] * pv.data[j];
                    }
                    pu.grad[i] += acc;
                }
            }
            if (pv.requires_grad) {
                pv.ensure_grad();
                for (std::size_t j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        acc += self.grad[i * d + j] * pu.data[i];
                    }
                    pv.grad[j] += acc;
                }
            }
        });
}

Tensor normalize(const Tensor& u) {
    require_rank(u, 1, "normalize");
    const auto& uv = u.data();
    double sq = 0.0;
    for (const double x : uv) {
        sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (!(norm > kNormEpsilon)) {
        throw DegenerateVectorError("normalize: vector norm " + std::to_string(norm) +
                                    " is below the guard " + std::to_string(kNormEpsilon));
    }
    std::vector<double> out(uv.size());
    for (std::size_t i = 0; i < uv.size(); ++i) {
        out[i] = uv[i] / norm;
    }
    return make_op_result(u.shape(), std::move(out), {u},
        [norm](const detail::TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            // Project the upstream gradient onto the tangent space of the
            // sphere at y, then scale by 1/norm.
            double dot = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                dot += self.grad[i] * self.data[i];
            }
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[i] += (self.grad[i] - self.data[i] * dot) / norm;
            }
        });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    std::vector<double> out(m * n);
    const auto& av = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = av[i * n + j];
        }
    }
    return make_op_result({n, m}, std::move(out), {a},
        [m, n](const detail::TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    p.grad[i * n + j] += self.grad[j * m + i];
                }
            }
        });
}

Tensor inverse(const Tensor& a) {
    require_rank(a, 2, "inverse");
    const std::size_t n = a.shape()[0];
    if (a.shape()[1] != n) {
        throw DimensionError("inverse: matrix is not square: " +
                             shape_to_string(a.shape()));
    }
    std::vector<double> inv = dense_inverse(a.data(), n);
    return make_op_result({n, n}, std::move(inv), {a},
        [n](const detail::TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            // dL/dA = -Y^T G Y^T with Y = A^{-1} (self.data).
            const auto& y = self.data;
            const auto& g = self.grad;
            std::vector<double> tmp(n * n, 0.0); // Y^T * G
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t l = 0; l < n; ++l) {
                    const double x = y[l * n + i]; // Y^T(i,l)
                    if (x == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) {
                        tmp[i * n + j] += x * g[l * n + j];
                    }
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t l = 0; l < n; ++l) {
                        acc += tmp[i * n + l] * y[j * n + l]; // * Y^T(l,j)
                    }
                    p.grad[i * n + j] -= acc;
                }
            }
        });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (const double x : a.data()) {
        total += x;
    }
    return make_op_result({1}, {total}, {a},
        [](const detail::TensorNode& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            const double g = self.grad[0];
            for (auto& gi : p.grad) {
                gi += g;
            }
        });
}

Tensor add_row(const Tensor& matrix, const Tensor& row) {
    require_rank(matrix, 2, "add_row matrix");
    require_rank(row, 1, "add_row row");
    const std::size_t m = matrix.shape()[0];
    const std::size_t n = matrix.shape()[1];
    if (row.size() != n) {
        throw_shape_mismatch("add_row", matrix.shape(), row.shape());
    }
    std::vector<double> out(m * n);
    const auto& mv = matrix.data();
    const auto& rv = row.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = mv[i * n + j] + rv[j];
        }
    }
    return make_op_result({m, n}, std::move(out), {matrix, row},
        [m, n](const detail::TensorNode& self) {
            auto& pm = *self.parents[0];
            auto& pr = *self.parents[1];
            if (pm.requires_grad) {
                pm.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    pm.grad[i] += self.grad[i];
                }
            }
            if (pr.requires_grad) {
                pr.ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        pr.grad[j] += self.grad[i * n + j];
                    }
                }
            }
        });
}

Tensor loss_mse(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw_shape_mismatch("loss_mse", pred.shape(), target.shape());
    }
    const auto& pv = pred.data();
    const auto& tv = target.data();
    const double inv_n = 1.0 / static_cast<double>(pv.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double diff = pv[i] - tv[i];
        acc += diff * diff;
    }
    return make_op_result({1}, {acc * inv_n}, {pred, target},
        [inv_n](const detail::TensorNode& self) {
            auto& pp = *self.parents[0];
            auto& pt = *self.parents[1];
            const double g = 2.0 * self.grad[0] * inv_n;
            if (pp.requires_grad) {
                pp.ensure_grad();
                for (std::size_t i = 0; i < pp.data.size(); ++i) {
                    pp.grad[i] += g * (pp.data[i] - pt.data[i]);
                }
            }
            if (pt.requires_grad) {
                pt.ensure_grad();
                for (std::size_t i = 0; i < pt.data.size(); ++i) {
                    pt.grad[i] -= g * (pp.data[i] - pt.data[i]);
                }
            }
        });
}

// --- block operations -----------------------------------------------------

namespace {

std::size_t check_blocks(const char* op, const std::vector<Tensor>& blocks,
                         std::size_t target_dim) {
    if (blocks.empty()) {
        throw ConfigError(std::string(op) + ": block list is empty");
    }
    const std::size_t m = blocks.front().rank() == 2 ? blocks.front().shape()[0] : 0;
    for (const auto& blk : blocks) {
        if (blk.rank() != 2 || blk.shape()[0] != blk.shape()[1] || blk.shape()[0] != m) {
            throw ConfigError(std::string(op) + ": blocks must be equally sized square "
                              "matrices, got " + shape_to_string(blk.shape()));
        }
    }
    if (target_dim != 0 && m * blocks.size() != target_dim) {
        throw ConfigError(std::string(op) + ": " + std::to_string(blocks.size()) +
                          " blocks of size " + std::to_string(m) +
                          " do not tile dimension " + std::to_string(target_dim));
    }
    return m;
}

} // namespace

Tensor block_apply_left(const std::vector<Tensor>& blocks, const Tensor& w) {
    require_rank(w, 2, "block_apply_left weight");
    const std::size_t d = w.shape()[0];
    const std::size_t f = w.shape()[1];
    const std::size_t m = check_blocks("block_apply_left", blocks, d);
    const std::size_t n = blocks.size();

    std::vector<double> out(d * f, 0.0);
    const auto& wv = w.data();
    for (std::size_t blk = 0; blk < n; ++blk) {
        const auto& bv = blocks[blk].data();
        const std::size_t r0 = blk * m;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t l = 0; l < m; ++l) {
                const double x = bv[i * m + l];
                if (x == 0.0) continue;
                const double* wrow = &wv[(r0 + l) * f];
                double* orow = &out[(r0 + i) * f];
                for (std::size_t j = 0; j < f; ++j) {
                    orow[j] += x * wrow[j];
                }
            }
        }
    }
    std::vector<Tensor> parents = blocks;
    parents.push_back(w);
    return make_op_result({d, f}, std::move(out), std::move(parents),
        [m, n, f](const detail::TensorNode& self) {
            auto& pw = *self.parents[n];
            const auto& g = self.grad;
            for (std::size_t blk = 0; blk < n; ++blk) {
                auto& pb = *self.parents[blk];
                const std::size_t r0 = blk * m;
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    // dL/dB_blk = G_blk * W_blk^T
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t l = 0; l < m; ++l) {
                            double acc = 0.0;
                            const double* grow = &g[(r0 + i) * f];
                            const double* wrow = &pw.data[(r0 + l) * f];
                            for (std::size_t j = 0; j < f; ++j) {
                                acc += grow[j] * wrow[j];
                            }
                            pb.grad[i * m + l] += acc;
                        }
                    }
                }
                if (pw.requires_grad) {
                    pw.ensure_grad();
                    // dL/dW_blk = B_blk^T * G_blk
                    for (std::size_t l = 0; l < m; ++l) {
                        for (std::size_t i = 0; i < m; ++i) {
                            const double x = pb.data[i * m + l];
                            if (x == 0.0) continue;
                            const double* grow = &g[(r0 + i) * f];
                            double* wgrow = &pw.grad[(r0 + l) * f];
                            for (std::size_t j = 0; j < f; ++j) {
                                wgrow[j] += x * grow[j];
                            }
                        }
                    }
                }
            }
        });
}

Tensor block_apply_right(const Tensor& w, const std::vector<Tensor>& blocks) {
    require_rank(w, 2, "block_apply_right weight");
    const std::size_t d = w.shape()[0];
    const std::size_t f = w.shape()[1];
    const std::size_t m = check_blocks("block_apply_right", blocks, f);
    const std::size_t n = blocks.size();

    std::vector<double> out(d * f, 0.0);
    const auto& wv = w.data();
    for (std::size_t blk = 0; blk < n; ++blk) {
        const auto& bv = blocks[blk].data();
        const std::size_t c0 = blk * m;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t l = 0; l < m; ++l) {
                const double x = wv[i * f + c0 + l];
                if (x == 0.0) continue;
                const double* brow = &bv[l * m];
                double* orow = &out[i * f + c0];
                for (std::size_t j = 0; j < m; ++j) {
                    orow[j] += x * brow[j];
                }
            }
        }
    }
    std::vector<Tensor> parents{w};
    parents.insert(parents.end(), blocks.begin(), blocks.end());
    return make_op_result({d, f}, std::move(out), std::move(parents),
        [d, m, n, f](const detail::TensorNode& self) {
            auto& pw = *self.parents[0];
            const auto& g = self.grad;
            for (std::size_t blk = 0; blk < n; ++blk) {
                auto& pb = *self.parents[1 + blk];
                const std::size_t c0 = blk * m;
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    // dL/dB_blk = W_blk^T * G_blk
                    for (std::size_t l = 0; l < m; ++l) {
                        for (std::size_t j = 0; j < m; ++j) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < d; ++i) {
                                acc += pw.data[i * f + c0 + l] * g[i * f + c0 + j];
                            }
                            pb.grad[l * m + j] += acc;
                        }
                    }
                }
                if (pw.requires_grad) {
                    pw.ensure_grad();
                    // dL/dW_blk = G_blk * B_blk^T
                    for (std::size_t i = 0; i < d; ++i) {
                        for (std::size_t l = 0; l < m; ++l) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < m; ++j) {
                                acc += g[i * f + c0 + j] * pb.data[l * m + j];
                            }
                            pw.grad[i * f + c0 + l] += acc;
                        }
                    }
                }
            }
        });
}

Tensor build_block_diagonal(const std::vector<Tensor>& blocks) {
    const std::size_t m = check_blocks("build_block_diagonal", blocks, 0);
    const std::size_t n = blocks.size();
    const std::size_t d = n * m;
    std::vector<double> out(d * d, 0.0);
    for (std::size_t blk = 0; blk < n; ++blk) {
        const auto& bv = blocks[blk].data();
        const std::size_t o = blk * m;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                out[(o + i) * d + (o + j)] = bv[i * m + j];
            }
        }
    }
    return make_op_result({d, d}, std::move(out), blocks,
        [m, n, d](const detail::TensorNode& self) {
            for (std::size_t blk = 0; blk < n; ++blk) {
                auto& pb = *self.parents[blk];
                if (!pb.requires_grad) continue;
                pb.ensure_grad();
                const std::size_t o = blk * m;
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < m; ++j) {
                        pb.grad[i * m + j] += self.grad[(o + i) * d + (o + j)];
                    }
                }
            }
        });
}

} // namespace ether
