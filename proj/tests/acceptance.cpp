// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria cover exact factor identities, the relaxation bound,
// determinant dichotomy, block-parallel equivalence, parameter accounting,
// gradient correctness, the energy pattern after finetuning, learning-rate
// robustness, merge equivalence, and end-to-end determinism.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include "ether/adapters.hpp"
#include "ether/checkpoint.hpp"
#include "ether/commands.hpp"
#include "ether/config.hpp"
#include "ether/harness.hpp"
#include "ether/metrics.hpp"
#include "ether/rng.hpp"
#include "ether/tensor.hpp"
#include "support/test_utils.hpp"

using namespace ether;

namespace {

struct Criterion {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;

    Criterion() = default;
    Criterion(int id_, std::string name_) : id(id_), name(std::move(name_)) {}
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

double identity_distance(const Tensor& t) {
    return frobenius_distance(t, Tensor::identity(t.rows()));
}

// The reference task: 32 -> 64 -> 16, 4096 pretrain / 1024 finetune samples,
// rotation-plus-offset shift. TaskSpec defaults are the reference values.
TaskSpec reference_task() {
    return {};
}

ModelArch reference_arch() {
    return {32, 64, 16};
}

// --- criteria ------------------------------------------------------------

Criterion criterion_reflection_distance() {
    Criterion c{1, "reflection distance exactly 2"};
    Rng rng(1001);
    double worst = 0.0;
    for (const std::size_t d : {2ul, 8ul, 64ul}) {
        for (int i = 0; i < 1000; ++i) {
            const Tensor h = householder(Tensor::from_data({d}, rng.normal_vector(d)));
            worst = std::max(worst, std::abs(identity_distance(h) - 2.0));
        }
    }
    c.passed = worst <= 1e-10;
    c.detail = "max |dist - 2| = " + fmt(worst) + " over 3000 reflections (tol 1e-10)";
    return c;
}

Criterion criterion_relaxation_bound() {
    Criterion c{2, "relaxed factor bound"};
    Rng rng(1002);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Tensor u = Tensor::from_data({16}, rng.normal_vector(16));
        const Tensor v = Tensor::from_data({16}, rng.normal_vector(16));
        worst = std::max(worst, identity_distance(ether_plus_factor(u, v)));
    }
    const Tensor u = Tensor::from_data({16}, rng.normal_vector(16));
    const double self_dist = identity_distance(ether_plus_factor(u, u));
    c.passed = worst <= 2.0 + 1e-10 && self_dist <= 1e-12;
    c.detail = "max dist " + fmt(worst) + " <= 2+1e-10 over 10000 pairs; u=v dist " +
               fmt(self_dist) + " <= 1e-12";
    return c;
}

Criterion criterion_determinant_dichotomy() {
    Criterion c{3, "determinant dichotomy"};
    Rng rng(1003);
    double worst_h = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = 2 + rng.index(15);
        const Tensor h = householder(Tensor::from_data({d}, rng.normal_vector(d)));
        worst_h = std::max(worst_h, std::abs(determinant(h) + 1.0));
    }
    double worst_q = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = 2 + rng.index(7); // up to 8x8
        const Tensor q = cayley(Tensor::from_data({d, d}, rng.normal_vector(d * d)));
        worst_q = std::max(worst_q, std::abs(determinant(q) - 1.0));
    }
    c.passed = worst_h <= 1e-8 && worst_q <= 1e-8;
    c.detail = "reflections: max |det+1| = " + fmt(worst_h) +
               "; rotations: max |det-1| = " + fmt(worst_q) + " (tol 1e-8)";
    return c;
}

Criterion criterion_block_parallel() {
    Criterion c{4, "block-parallel equivalence"};
    Rng rng(1004);
    double worst = 0.0;
    bool ratio_ok = true;
    const std::pair<std::size_t, std::size_t> shapes[] = {{8, 12}, {32, 48}, {64, 64}};
    for (const auto& [d, f] : shapes) {
        for (const std::size_t n : {1ul, 2ul, 4ul, 8ul}) {
            if (d % n != 0) {
                continue;
            }
            const std::size_t m = d / n;
            std::vector<Tensor> blocks;
            std::vector<std::vector<double>> raw;
            for (std::size_t i = 0; i < n; ++i) {
                blocks.push_back(
                    Tensor::from_data({m, m}, rng.normal_vector(m * m)));
                raw.push_back(blocks.back().data());
            }
            const Tensor w = Tensor::from_data({d, f}, rng.normal_vector(d * f));
            const auto dense = testutil::ref_matmul(
                testutil::ref_block_diagonal(raw, m), w.data(), d, d, f);
            const Tensor blocked = block_apply_left(blocks, w);
            worst = std::max(worst, testutil::max_abs_diff(dense, blocked.data()));

            const OpCount ops = op_count(d, f, n);
            const OpCount one = op_count(d, f, 1);
            ratio_ok = ratio_ok && ops.multiplications * n == one.multiplications;
        }
    }
    c.passed = worst <= 1e-12 && ratio_ok;
    c.detail = "max |dense - blocked| = " + fmt(worst) +
               " (tol 1e-12); multiplication ratio exactly 1/n: " +
               (ratio_ok ? "yes" : "no");
    return c;
}

Criterion criterion_parameter_accounting() {
    Criterion c{5, "parameter accounting"};
    struct Row {
        std::size_t d, f, n, r;
    };
    const Row table[] = {{64, 64, 1, 1}, {64, 64, 4, 1}, {32, 48, 2, 4},
                         {128, 64, 8, 2}, {16, 16, 16, 8}};
    bool ok = true;
    std::string bad;
    for (const auto& row : table) {
        ok = ok && param_count(Method::Ether, row.d, row.f, row.n, row.r, true) == row.d;
        ok = ok && param_count(Method::EtherPlus, row.d, row.f, row.n, row.r, true) ==
                       2 * (row.d + row.f);
        ok = ok && param_count(Method::Lora, row.d, row.f, row.n, row.r, true) ==
                       row.r * (row.d + row.f);
        ok = ok && param_count(Method::Oft, row.d, row.f, row.n, row.r, true) ==
                       row.d * row.d / row.n;
        if (!ok && bad.empty()) {
            bad = "d=" + std::to_string(row.d) + ",n=" + std::to_string(row.n);
        }
    }
    // Constant over n for the reflection family.
    for (const std::size_t n : {1ul, 2ul, 4ul, 8ul, 16ul}) {
        ok = ok && param_count(Method::Ether, 64, 64, n, 1, true) == 64;
    }
    c.passed = ok;
    c.detail = ok ? "exact integer equality on the 5-configuration table"
                  : "first mismatch at " + bad;
    return c;
}

Criterion criterion_gradient_correctness() {
    Criterion c{6, "adapter gradient correctness"};
    Rng rng(1006);
    double worst = 0.0;
    std::string worst_method;
    for (const Method method : all_methods()) {
        // Two adapted layers, 8 -> 6 -> 4.
        Rng arng(2000 + static_cast<std::uint64_t>(method));
        ToyModel model;
        model.layers.push_back({testutil::random_tensor(rng, {8, 6}),
                                testutil::random_tensor(rng, {6}), nullptr});
        model.layers.push_back({testutil::random_tensor(rng, {6, 4}),
                                testutil::random_tensor(rng, {4}), nullptr});
        model.attach_adapters({method, 2, 2, true}, arng);

        // Move off init so every parameter has generic gradient flow.
        for (auto& p : model.adapter_parameters()) {
            for (auto& v : p.mutable_data()) {
                v += 0.05 * rng.normal();
            }
        }
        const Tensor x = testutil::random_tensor(rng, {5, 8});
        const Tensor target = testutil::random_tensor(rng, {5, 4});
        const double err = testutil::max_grad_rel_error(
            [&] { return loss_mse(model.forward(x), target); },
            model.adapter_parameters());
        if (err > worst) {
            worst = err;
            worst_method = to_string(method);
        }
    }
    c.passed = worst <= 1e-4;
    c.detail = "max relative FD error " + fmt(worst) + " (tol 1e-4, worst: " +
               worst_method + ")";
    return c;
}

Criterion criterion_energy_pattern(const ToyModel& base) {
    Criterion c{7, "hyperspherical energy pattern"};
    const TaskSpec task = reference_task();

    double worst_orthogonal = 0.0;
    std::map<std::string, int> nonzero_counts;
    for (const std::uint64_t seed : {1ul, 2ul, 3ul}) {
        for (const Method method :
             {Method::Ether, Method::Oft, Method::EtherPlus, Method::Naive}) {
            FinetuneOptions options;
            options.lr = 10.0 * method_lr_unit(method); // each method's working rate
            options.epochs = 40;
            options.cosine = true;
            options.seed = seed;
            const FinetuneResult res = finetune(base, {method, 1, 4, true}, task, options);
            const double delta = std::abs(res.per_epoch.back().delta_he);
            if (method == Method::Ether || method == Method::Oft) {
                worst_orthogonal = std::max(worst_orthogonal, delta);
            } else if (delta > 1e-4) {
                nonzero_counts[to_string(method)] += 1;
            }
        }
    }
    const bool relaxed_ok =
        nonzero_counts["etherplus"] >= 2 && nonzero_counts["naive"] >= 2;
    c.passed = worst_orthogonal <= 1e-8 && relaxed_ok;
    c.detail = "orthogonal methods: max |dHE| = " + fmt(worst_orthogonal) +
               " (tol 1e-8); non-orthogonal |dHE| > 1e-4 on " +
               std::to_string(nonzero_counts["etherplus"]) + "/3 (etherplus) and " +
               std::to_string(nonzero_counts["naive"]) + "/3 (naive) seeds";
    return c;
}

Criterion criterion_lr_robustness() {
    Criterion c{8, "learning-rate robustness"};
    SweepOptions options;
    options.train.epochs = 60;
    options.train.cosine = true;
    options.master_seed = 7;
    options.threads = 2;

    const SweepResult sweep = lr_sweep(reference_task(), reference_arch(), options);

    // (a) Per-factor distance bound at every learning rate and epoch; the
    // bounded methods also never trip the divergence predicate.
    double worst_factor = 0.0;
    bool eplus_stable = true;
    for (const auto& row : sweep.rows) {
        if (row.method == Method::Ether || row.method == Method::EtherPlus) {
            worst_factor = std::max(worst_factor, row.max_block_factor_distance);
        }
        if (row.method == Method::EtherPlus) {
            eplus_stable = eplus_stable && !row.diverged;
        }
    }
    const bool bound_ok = worst_factor <= 2.0 + 1e-10 && eplus_stable;

    // (b) Distance blow-up of the unconstrained methods at their largest lr.
    std::map<Method, MethodSummary> summary;
    for (const auto& s : sweep.summaries) {
        summary[s.method] = s;
    }
    const double eplus_dist = summary[Method::EtherPlus].distance_at_largest_lr;
    const double oft_ratio = summary[Method::Oft].distance_at_largest_lr / eplus_dist;
    const double naive_ratio = summary[Method::Naive].distance_at_largest_lr / eplus_dist;
    const bool blowup_ok = oft_ratio >= 10.0 && naive_ratio >= 10.0;

    // (c) Robust-range spans.
    const double eplus_span = summary[Method::EtherPlus].robust_span_decades;
    const double oft_span = summary[Method::Oft].robust_span_decades;
    const bool span_ok = eplus_span >= 2.0 && oft_span < 2.0;

    c.passed = bound_ok && blowup_ok && span_ok;
    c.detail = "max factor dist " + fmt(worst_factor) + " <= 2+1e-10 and no "
               "etherplus divergence: " + (bound_ok ? "yes" : "no") +
               "; distance ratios at top lr oft " +
               fmt(oft_ratio) + "x, naive " + fmt(naive_ratio) +
               "x (need >= 10x); robust span etherplus " + fmt(eplus_span) +
               " decades (need >= 2), oft " + fmt(oft_span) + " (need < 2)";
    return c;
}

Criterion criterion_merge_equivalence() {
    Criterion c{9, "merge equivalence"};
    Rng rng(1009);
    double worst = 0.0;
    for (const Method method : all_methods()) {
        Rng arng(3000 + static_cast<std::uint64_t>(method));
        AdaptedLinear layer{testutil::random_tensor(rng, {16, 12}),
                            testutil::random_tensor(rng, {12}),
                            make_adapter({method, 4, 3, true}, 16, 12, arng)};
        for (auto& p : layer.adapter->parameters()) {
            for (auto& v : p.mutable_data()) {
                v += 0.05 * rng.normal();
            }
        }
        const AdaptedLinear plain{merge(layer), layer.b, nullptr};
        for (int i = 0; i < 100; ++i) {
            const Tensor x = testutil::random_tensor(rng, {2, 16});
            worst = std::max(worst, testutil::max_abs_diff(layer.forward(x).data(),
                                                           plain.forward(x).data()));
        }
    }
    c.passed = worst <= 1e-12;
    c.detail = "max |adapted - merged| = " + fmt(worst) +
               " over 100 inputs x 5 methods (tol 1e-12)";
    return c;
}

Criterion criterion_determinism() {
    Criterion c{10, "end-to-end determinism"};
    namespace fs = std::filesystem;
    const fs::path out = fs::temp_directory_path() / "etherkit_acc_sweep.csv";

    ExperimentConfig config;
    config.methods = {Method::Ether, Method::EtherPlus, Method::Naive};
    config.task.input_dim = 8;
    config.hidden_dim = 16;
    config.task.output_dim = 4;
    config.task.pretrain_samples = 256;
    config.task.finetune_samples = 128;
    config.task.pretrain_seed = 5;
    config.task.shift_seed = 6;
    config.epochs = 4;
    config.seed = 99;
    config.threads = 2;

    auto read = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    config.out_path = out.string();
    cmd_sweep(config);
    const std::string first = read(out);
    cmd_sweep(config);
    const bool sweep_ok = !first.empty() && first == read(out);
    fs::remove(out);

    // Checkpoint round-trip.
    Rng rng(1010);
    std::map<std::string, Tensor> tensors;
    for (const Method method : all_methods()) {
        Rng arng(4000 + static_cast<std::uint64_t>(method));
        auto adapter = make_adapter({method, 2, 3, true}, 8, 6, arng);
        for (const auto& [name, tensor] : adapter->named_parameters()) {
            tensors.emplace(to_string(method) + "." + name, tensor);
        }
    }
    const auto bytes = encode_checkpoint(tensors);
    const bool ckpt_ok = encode_checkpoint(decode_checkpoint(bytes)) == bytes;

    c.passed = sweep_ok && ckpt_ok;
    c.detail = std::string("sweep CSVs byte-identical: ") + (sweep_ok ? "yes" : "no") +
               "; checkpoint round-trip byte-identical: " + (ckpt_ok ? "yes" : "no");
    return c;
}

} // namespace

int main() {
    std::vector<Criterion> results;
    const auto timed = [&](const std::function<Criterion()>& fn) {
        const auto start = std::chrono::steady_clock::now();
        Criterion c;
        try {
            c = fn();
        } catch (const std::exception& e) {
            c.name = "exception";
            c.passed = false;
            c.detail = std::string("unexpected exception: ") + e.what();
        }
        c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                  start).count();
        results.push_back(c);
    };

    timed(criterion_reflection_distance);
    timed(criterion_relaxation_bound);
    timed(criterion_determinant_dichotomy);
    timed(criterion_block_parallel);
    timed(criterion_parameter_accounting);
    timed(criterion_gradient_correctness);

    // Criteria 7 and 8 share the reference pretrained model.
    {
        const auto start = std::chrono::steady_clock::now();
        const ToyModel base =
            make_pretrained(reference_task(), reference_arch(),
                            reference_task().pretrain_seed);
        const double setup =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        std::printf("       reference pretraining: %.1f s\n", setup);
        timed([&] { return criterion_energy_pattern(base); });
    }
    timed(criterion_lr_robustness);
    timed(criterion_merge_equivalence);
    timed(criterion_determinism);

    // Runtime limits are part of the criteria.
    for (auto& c : results) {
        if ((c.id == 1 || c.id == 2) && c.seconds >= 1.0) {
            c.passed = false;
            c.detail += "; RUNTIME " + fmt(c.seconds) + " s exceeds 1 s";
        }
        if (c.id == 6 && c.seconds >= 30.0) {
            c.passed = false;
            c.detail += "; RUNTIME " + fmt(c.seconds) + " s exceeds 30 s";
        }
        if (c.id == 8 && c.seconds >= 600.0) {
            c.passed = false;
            c.detail += "; RUNTIME " + fmt(c.seconds) + " s exceeds 600 s";
        }
    }

    int failures = 0;
    for (const auto& c : results) {
        std::printf("[%2d/10] %s  %-34s %s (%.2f s)\n", c.id,
                    c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str(),
                    c.seconds);
        failures += c.passed ? 0 : 1;
    }
    std::printf("ACCEPTANCE: %d/10 criteria passed\n",
                static_cast<int>(results.size()) - failures);
    return failures == 0 ? 0 : 1;
}
