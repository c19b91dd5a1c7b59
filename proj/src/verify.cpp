// SPDX-License-Identifier: Apache-2.0

#include "ether/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "ether/adapters.hpp"
#include "ether/harness.hpp"
#include "ether/metrics.hpp"
#include "ether/rng.hpp"
#include "ether/tensor.hpp"

namespace ether {

namespace {

struct Recorder {
    std::vector<CheckResult> results;
    std::string suite;

    void check(const std::string& name, bool passed, const std::string& detail) {
        results.push_back({suite, name, passed, detail});
    }
};

Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = false) {
    std::size_t numel = 1;
    for (const auto d : shape) {
        numel *= d;
    }
    return Tensor::from_data(std::move(shape), rng.normal_vector(numel), requires_grad);
}

// Central finite difference of f w.r.t. one leaf entry.
template <typename F>
double central_diff(const F& f, Tensor& leaf, std::size_t index, double step = 1e-6) {
    auto& data = leaf.mutable_data();
    const double saved = data[index];
    data[index] = saved + step;
    const double plus = f();
    data[index] = saved - step;
    const double minus = f();
    data[index] = saved;
    return (plus - minus) / (2.0 * step);
}

template <typename F>
double max_grad_error(const F& f, std::vector<Tensor> leaves) {
    const Tensor loss = f();
    for (auto& leaf : leaves) {
        leaf.zero_grad();
    }
    backward(loss);
    double worst = 0.0;
    for (auto& leaf : leaves) {
        const auto grads = leaf.grad();
        for (std::size_t i = 0; i < grads.size(); ++i) {
            const double fd = central_diff([&] { return f().value(); }, leaf, i);
            const double denom = std::max({std::abs(fd), std::abs(grads[i]), 1e-6});
            worst = std::max(worst, std::abs(grads[i] - fd) / denom);
        }
    }
    return worst;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

// Small task so the harness checks stay fast.
TaskSpec small_task() {
    TaskSpec task;
    task.input_dim = 8;
    task.output_dim = 4;
    task.pretrain_samples = 256;
    task.finetune_samples = 128;
    task.shift_magnitude = 1.0;
    return task;
}

ModelArch small_arch() {
    return {8, 16, 4};
}

PretrainOptions small_pretrain() {
    PretrainOptions options;
    options.max_epochs = 600;
    options.loss_threshold = 0.02;
    return options;
}

void tensor_core_suite(Recorder& rec, const VerifyOptions& options) {
    rec.suite = "tensor-core";
    Rng rng(options.seed);

    {
        Tensor a = random_tensor(rng, {3, 4}, true);
        Tensor b = random_tensor(rng, {4, 2}, true);
        Tensor u = random_tensor(rng, {6}, true);
        auto f = [&] {
            const Tensor prod = matmul(a, b);
            const Tensor act = ether::tanh(prod);
            const Tensor nu = normalize(u);
            return add(sum(mul(act, act)), sum(outer(nu, nu)));
        };
        const double err = max_grad_error(f, {a, b, u});
        rec.check("finite-difference-gradients", err <= 1e-4,
                  "max relative error " + fmt(err));
    }
    {
        Tensor w = random_tensor(rng, {5}, true);
        const Tensor l1 = sum(mul(w, w));
        const Tensor l2 = sum(w);
        w.zero_grad();
        backward(l1);
        backward(l2);
        const auto separate = w.grad();
        w.zero_grad();
        backward(add(sum(mul(w, w)), sum(w)));
        const auto joint = w.grad();
        double worst = 0.0;
        for (std::size_t i = 0; i < joint.size(); ++i) {
            worst = std::max(worst, std::abs(joint[i] - separate[i]));
        }
        rec.check("backward-linearity", worst <= 1e-12, "max deviation " + fmt(worst));
    }
    {
        Tensor a = random_tensor(rng, {8, 8});
        Tensor b = random_tensor(rng, {8, 8});
        Tensor c = random_tensor(rng, {8, 8});
        const double dev =
            frobenius_distance(matmul(matmul(a, b), c), matmul(a, matmul(b, c)));
        rec.check("matmul-associativity", dev <= 1e-10, "deviation " + fmt(dev));
    }
    {
        Rng r1(42);
        Rng r2(42);
        Tensor x1 = random_tensor(r1, {4, 4});
        Tensor x2 = random_tensor(r2, {4, 4});
        const Tensor y1 = ether::tanh(matmul(x1, x1));
        const Tensor y2 = ether::tanh(matmul(x2, x2));
        rec.check("seed-replay-bit-identical", y1.data() == y2.data(),
                  "forward values under a replayed seed");
    }
}

void adapters_suite(Recorder& rec, const VerifyOptions& options) {
    rec.suite = "adapters";
    Rng rng(options.seed + 1);

    {
        // Distance of every reflection factor to the identity is exactly 2.
        double worst = 0.0;
        for (const std::size_t d : {2ul, 8ul, 64ul}) {
            for (int i = 0; i < 1000; ++i) {
                Tensor u = Tensor::from_data({d}, rng.normal_vector(d));
                Tensor h;
                if (options.skip_normalization) {
                    h = sub(Tensor::identity(d), scale(outer(u, u), 2.0));
                } else {
                    h = householder(u);
                }
                const double dist = frobenius_distance(h, Tensor::identity(d));
                worst = std::max(worst, std::abs(dist - 2.0));
            }
        }
        rec.check("householder-unit-distance", worst <= 1e-10,
                  "max |distance - 2| = " + fmt(worst) + " over 3000 reflections");
    }
    {
        double worst_orth = 0.0;
        double worst_invol = 0.0;
        double worst_det = 0.0;
        for (int i = 0; i < 50; ++i) {
            const Tensor h = householder(Tensor::from_data({8}, rng.normal_vector(8)));
            worst_orth = std::max(worst_orth, orthogonality_residual(h));
            worst_invol = std::max(
                worst_invol, frobenius_distance(matmul(h, h), Tensor::identity(8)));
            worst_det = std::max(worst_det, std::abs(determinant(h) + 1.0));
        }
        rec.check("householder-orthogonal-involutory",
                  worst_orth <= 1e-10 && worst_invol <= 1e-10 && worst_det <= 1e-8,
                  "orth " + fmt(worst_orth) + ", invol " + fmt(worst_invol) +
                      ", |det+1| " + fmt(worst_det));
    }
    {
        double worst = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const Tensor u = Tensor::from_data({16}, rng.normal_vector(16));
            const Tensor v = Tensor::from_data({16}, rng.normal_vector(16));
            worst = std::max(worst, frobenius_distance(ether_plus_factor(u, v),
                                                       Tensor::identity(16)));
        }
        const Tensor u = Tensor::from_data({16}, rng.normal_vector(16));
        const double self_dist =
            frobenius_distance(ether_plus_factor(u, u), Tensor::identity(16));
        rec.check("relaxed-factor-bound", worst <= 2.0 + 1e-10 && self_dist <= 1e-12,
                  "max distance " + fmt(worst) + ", u=v distance " + fmt(self_dist));
    }
    {
        double worst_orth = 0.0;
        double worst_det = 0.0;
        for (int i = 0; i < 50; ++i) {
            const Tensor q = cayley(random_tensor(rng, {6, 6}));
            worst_orth = std::max(worst_orth, orthogonality_residual(q));
            worst_det = std::max(worst_det, std::abs(determinant(q) - 1.0));
        }
        const double zero_dist =
            frobenius_distance(cayley(Tensor::zeros({5, 5})), Tensor::identity(5));
        rec.check("cayley-rotation",
                  worst_orth <= 1e-10 && worst_det <= 1e-8 && zero_dist == 0.0,
                  "orth " + fmt(worst_orth) + ", |det-1| " + fmt(worst_det) +
                      ", |Q(0)-I| " + fmt(zero_dist));
    }
    {
        double worst = 0.0;
        for (const std::size_t n : {1ul, 2ul, 4ul, 8ul}) {
            const std::size_t d = 32;
            const std::size_t f = 48;
            std::vector<Tensor> blocks;
            for (std::size_t i = 0; i < n; ++i) {
                blocks.push_back(random_tensor(rng, {d / n, d / n}));
            }
            const Tensor w = random_tensor(rng, {d, f});
            const Tensor dense = matmul(build_block_diagonal(blocks), w);
            const Tensor blocked = block_apply_left(blocks, w);
            for (std::size_t i = 0; i < dense.size(); ++i) {
                worst = std::max(worst, std::abs(dense.data()[i] - blocked.data()[i]));
            }
        }
        rec.check("block-parallel-equivalence", worst <= 1e-12,
                  "max |dense - blocked| = " + fmt(worst));
    }
    {
        double worst = 0.0;
        for (const Method method : all_methods()) {
            AdapterConfig config{method, 2, 3, true};
            Rng arng(options.seed + 7);
            AdaptedLinear layer{random_tensor(rng, {8, 12}), random_tensor(rng, {12}),
                                make_adapter(config, 8, 12, arng)};
            const Tensor x = random_tensor(rng, {5, 8});
            const Tensor adapted = layer.forward(x);
            const AdaptedLinear plain{merge(layer), layer.b, nullptr};
            const Tensor merged = plain.forward(x);
            worst = std::max(worst, frobenius_distance(adapted, merged));
        }
        rec.check("merge-equivalence", worst <= 1e-12,
                  "max |adapted - merged| = " + fmt(worst));
    }
    {
        bool ok = true;
        std::string detail = "adapter counts match the formulas";
        for (const Method method : all_methods()) {
            for (const std::size_t n : {1ul, 2ul, 4ul}) {
                AdapterConfig config{method, n, 3, true};
                Rng arng(options.seed + 9);
                const auto adapter = make_adapter(config, 16, 8, arng);
                const std::size_t expected = param_count(method, 16, 8, n, 3, true);
                if (adapter->param_count() != expected) {
                    ok = false;
                    detail = to_string(method) + " n=" + std::to_string(n) + ": got " +
                             std::to_string(adapter->param_count()) + ", formula " +
                             std::to_string(expected);
                }
            }
        }
        rec.check("param-count-formulas", ok, detail);
    }
}

void metrics_suite(Recorder& rec, const VerifyOptions& options) {
    rec.suite = "metrics";
    Rng rng(options.seed + 2);

    {
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const Tensor w = random_tensor(rng, {12, 9});
            const Tensor h = householder(Tensor::from_data({12}, rng.normal_vector(12)));
            const double before = hyperspherical_energy(w).value;
            const double after = hyperspherical_energy(matmul(h, w)).value;
            worst = std::max(worst, std::abs(after - before));
        }
        rec.check("energy-orthogonal-invariance", worst <= 1e-8,
                  "max |HE(HW) - HE(W)| = " + fmt(worst));
    }
    {
        const Tensor w = random_tensor(rng, {12, 9});
        const Tensor u = Tensor::from_data({12}, rng.normal_vector(12));
        const Tensor v = Tensor::from_data({12}, rng.normal_vector(12));
        const double before = hyperspherical_energy(w).value;
        const double after = hyperspherical_energy(matmul(ether_plus_factor(u, v), w)).value;
        rec.check("energy-relaxed-sensitivity", std::abs(after - before) > 1e-6,
                  "|HE(H+W) - HE(W)| = " + fmt(std::abs(after - before)));
    }
    {
        bool ok = true;
        std::string detail = "blocked multiplications scale exactly as 1/n";
        for (const std::size_t n : {1ul, 2ul, 4ul, 8ul}) {
            const OpCount blocked = op_count(32, 48, n);
            const OpCount dense = op_count(32, 48, 1);
            if (blocked.multiplications * n != dense.multiplications ||
                blocked.additions * n != dense.additions) {
                ok = false;
                detail = "ratio violated at n=" + std::to_string(n);
            }
        }
        rec.check("op-count-ratio", ok, detail);
    }
    {
        const Tensor w = random_tensor(rng, {10, 6});
        const Tensor h = householder(Tensor::from_data({10}, rng.normal_vector(10)));
        const double via_merge = weights_distance(w, matmul(h, w));
        const double direct = frobenius_norm(matmul(sub(h, Tensor::identity(10)), w));
        rec.check("distance-identity", std::abs(via_merge - direct) <= 1e-10,
                  "|merged-form - direct-form| = " + fmt(std::abs(via_merge - direct)));
    }
}

void harness_suite(Recorder& rec, const VerifyOptions& options) {
    rec.suite = "harness";
    const TaskSpec task = small_task();
    const ToyModel base = make_pretrained(task, small_arch(), 3, small_pretrain());

    {
        FinetuneOptions train;
        train.lr = 0.0;
        train.epochs = 3;
        train.seed = options.seed;
        const FinetuneResult res = finetune(base, {Method::Oft, 2, 4, true}, task, train);
        bool ok = true;
        for (const auto& em : res.per_epoch) {
            ok = ok && em.transform_distance == 0.0 && em.loss == res.frozen_loss;
        }
        rec.check("zero-lr-no-motion", ok,
                  "zero step size leaves the loss and distances untouched");
    }
    {
        const auto before = base.base_fingerprint();
        FinetuneOptions train;
        train.lr = 0.5;
        train.epochs = 3;
        train.seed = options.seed;
        finetune(base, {Method::EtherPlus, 1, 4, true}, task, train);
        rec.check("base-weights-frozen", base.base_fingerprint() == before,
                  "base weights bit-identical across finetuning");
    }
    {
        FinetuneOptions train;
        train.lr = 0.5;
        train.epochs = 3;
        train.seed = options.seed;
        const FinetuneResult r1 = finetune(base, {Method::Ether, 2, 4, true}, task, train);
        const FinetuneResult r2 = finetune(base, {Method::Ether, 2, 4, true}, task, train);
        bool ok = r1.per_epoch.size() == r2.per_epoch.size();
        for (std::size_t i = 0; ok && i < r1.per_epoch.size(); ++i) {
            ok = r1.per_epoch[i].loss == r2.per_epoch[i].loss;
        }
        rec.check("finetune-replay-deterministic", ok,
                  "per-epoch losses bit-identical under a replayed seed");
    }
    {
        PerturbOptions perturb;
        perturb.methods = {Method::EtherPlus, Method::Oft, Method::Naive, Method::Lora};
        perturb.strengths = {0.0};
        perturb.seed = options.seed;
        const auto rows = perturbation_sweep(base, perturb);
        double worst = 0.0;
        for (const auto& row : rows) {
            worst = std::max(worst, row.deviation);
        }
        rec.check("perturb-zero-strength", worst <= 1e-12,
                  "max deviation at strength 0 = " + fmt(worst));
    }
}

} // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
    Recorder rec;
    tensor_core_suite(rec, options);
    adapters_suite(rec, options);
    metrics_suite(rec, options);
    harness_suite(rec, options);
    return rec.results;
}

std::size_t print_verification(std::ostream& out,
                               const std::vector<CheckResult>& results) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> by_suite;
    std::vector<std::string> suite_order;
    for (const auto& r : results) {
        if (!by_suite.count(r.suite)) {
            suite_order.push_back(r.suite);
        }
        auto& [passed, total] = by_suite[r.suite];
        passed += r.passed ? 1 : 0;
        total += 1;
    }
    std::size_t failures = 0;
    for (const auto& suite : suite_order) {
        const auto& [passed, total] = by_suite[suite];
        out << "[suite " << suite << "] " << passed << "/" << total
            << " checks passed\n";
    }
    for (const auto& r : results) {
        if (!r.passed) {
            ++failures;
            out << "FAIL " << r.suite << "/" << r.name << ": " << r.detail << "\n";
        }
    }
    out << (failures == 0 ? "VERIFY: PASS" : "VERIFY: FAIL") << " ("
        << results.size() - failures << "/" << results.size() << " checks)\n";
    return failures;
}

} // namespace ether
