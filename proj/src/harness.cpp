// SPDX-License-Identifier: Apache-2.0

#include "ether/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "ether/errors.hpp"

namespace ether {

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& order,
                   std::size_t lo, std::size_t hi) {
    const std::size_t cols = m.shape()[1];
    std::vector<double> out((hi - lo) * cols);
    const auto& mv = m.data();
    for (std::size_t r = lo; r < hi; ++r) {
        std::memcpy(&out[(r - lo) * cols], &mv[order[r] * cols], cols * sizeof(double));
    }
    return Tensor::from_data({hi - lo, cols}, std::move(out));
}

void sgd_step(std::vector<Tensor>& params, double lr) {
    for (auto& p : params) {
        if (!p.has_grad()) {
            continue;
        }
        auto& data = p.mutable_data();
        const auto& g = p.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] -= lr * g[i];
        }
        p.zero_grad();
    }
}

double full_loss(const ToyModel& model, const Dataset& data) {
    return loss_mse(model.forward(data.x), data.y).value();
}

std::vector<std::size_t> iota_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    return order;
}

// Teacher network defining the task's ground-truth map.
struct Teacher {
    Tensor w1, c1, w2, c2;

    Tensor operator()(const Tensor& x) const {
        const Tensor hidden = ether::tanh(add_row(matmul(x, w1), c1));
        return add_row(matmul(hidden, w2), c2);
    }
};

Teacher make_teacher(const TaskSpec& task) {
    Rng rng = Rng::stream(task.pretrain_seed, 0);
    const std::size_t in = task.input_dim;
    const std::size_t hid = 2 * task.input_dim;
    const std::size_t out = task.output_dim;
    Teacher t;
    t.w1 = Tensor::from_data({in, hid}, rng.normal_vector(in * hid, 1.0 / std::sqrt(in)));
    t.c1 = Tensor::from_data({hid}, rng.normal_vector(hid, 0.1));
    t.w2 = Tensor::from_data({hid, out}, rng.normal_vector(hid * out, 1.0 / std::sqrt(hid)));
    t.c2 = Tensor::from_data({out}, rng.normal_vector(out, 0.1));
    return t;
}

Tensor sample_inputs(Rng& rng, std::size_t count, std::size_t dim) {
    return Tensor::from_data({count, dim}, rng.normal_vector(count * dim));
}

Tensor one_hot_argmax(const Tensor& y) {
    const std::size_t rows = y.shape()[0];
    const std::size_t cols = y.shape()[1];
    std::vector<double> out(rows * cols, 0.0);
    const auto& yv = y.data();
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j) {
            if (yv[i * cols + j] > yv[i * cols + best]) {
                best = j;
            }
        }
        out[i * cols + best] = 1.0;
    }
    return Tensor::from_data({rows, cols}, std::move(out));
}

Tensor finalize_targets(const TaskSpec& task, const Tensor& y) {
    return task.kind == TaskSpec::Kind::Classification ? one_hot_argmax(y) : y;
}

// Output-space shift: a rotation whose angle grows with the magnitude, plus
// a bias offset. Zero magnitude leaves the targets untouched. The offset is
// not reachable by weight transformations (biases stay frozen), so it puts a
// common floor under every method's finetuning loss.
constexpr double kShiftOffsetScale = 2.0;

struct Shift {
    Tensor rotation_t; // transposed rotation, for the row convention
    Tensor offset;
};

Shift make_shift(const TaskSpec& task) {
    Rng rng = Rng::stream(task.shift_seed, 0);
    const std::size_t out = task.output_dim;
    Tensor skew_raw = Tensor::from_data({out, out}, rng.normal_vector(out * out));
    double norm = frobenius_norm(sub(skew_raw, transpose(skew_raw)));
    if (norm == 0.0) {
        norm = 1.0;
    }
    const Tensor scaled = scale(skew_raw, 2.0 * task.shift_magnitude / norm);
    Shift s;
    s.rotation_t = transpose(cayley(scaled)).clone();
    Tensor dir = normalize(Tensor::from_data({out}, rng.normal_vector(out)));
    s.offset = scale(dir, kShiftOffsetScale * task.shift_magnitude).clone();
    return s;
}

double frobenius_norm_vec(const std::vector<double>& v) {
    double acc = 0.0;
    for (const double x : v) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t workers = std::min(threads, count);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                body(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

} // namespace

TaskSpec::Kind task_kind_from_string(const std::string& name) {
    if (name == "regression") {
        return TaskSpec::Kind::Regression;
    }
    if (name == "classification") {
        return TaskSpec::Kind::Classification;
    }
    throw ConfigError("unknown task kind '" + name + "'");
}

std::string to_string(TaskSpec::Kind kind) {
    return kind == TaskSpec::Kind::Regression ? "regression" : "classification";
}

Dataset make_pretrain_data(const TaskSpec& task) {
    const Teacher teacher = make_teacher(task);
    Rng rng = Rng::stream(task.pretrain_seed, 1);
    Dataset data;
    data.x = sample_inputs(rng, task.pretrain_samples, task.input_dim);
    data.y = finalize_targets(task, teacher(data.x));
    return data;
}

Dataset make_finetune_data(const TaskSpec& task) {
    const Teacher teacher = make_teacher(task);
    const Shift shift = make_shift(task);
    Rng rng = Rng::stream(task.shift_seed, 1);
    Dataset data;
    data.x = sample_inputs(rng, task.finetune_samples, task.input_dim);
    const Tensor shifted = add_row(matmul(teacher(data.x), shift.rotation_t), shift.offset);
    data.y = finalize_targets(task, shifted);
    return data;
}

// --- ToyModel ------------------------------------------------------------

Tensor ToyModel::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h = layers[l].forward(h);
        if (l + 1 < layers.size()) {
            h = ether::tanh(h);
        }
    }
    return h;
}

void ToyModel::attach_adapters(const AdapterConfig& config, Rng& rng) {
    for (auto& layer : layers) {
        layer.adapter = make_adapter(config, layer.in_dim(), layer.out_dim(), rng);
    }
}

void ToyModel::detach_adapters() {
    for (auto& layer : layers) {
        layer.adapter.reset();
    }
}

std::vector<Tensor> ToyModel::adapter_parameters() const {
    std::vector<Tensor> params;
    for (const auto& layer : layers) {
        if (layer.adapter) {
            for (auto& p : layer.adapter->parameters()) {
                params.push_back(p);
            }
        }
    }
    return params;
}

ToyModel ToyModel::copy_base() const {
    ToyModel out;
    out.layers.reserve(layers.size());
    for (const auto& layer : layers) {
        out.layers.push_back({layer.w.clone(), layer.b.clone(), nullptr});
    }
    return out;
}

std::vector<double> ToyModel::base_fingerprint() const {
    std::vector<double> out;
    for (const auto& layer : layers) {
        out.insert(out.end(), layer.w.data().begin(), layer.w.data().end());
        out.insert(out.end(), layer.b.data().begin(), layer.b.data().end());
    }
    return out;
}

// --- pretraining ------------------------------------------------------------

ToyModel make_pretrained(const TaskSpec& task, const ModelArch& arch,
                         std::uint64_t seed, const PretrainOptions& options,
                         PretrainReport* report) {
    if (arch.input != task.input_dim || arch.output != task.output_dim) {
        throw ConfigError("make_pretrained: arch dims " + std::to_string(arch.input) +
                          "->" + std::to_string(arch.output) + " do not match task dims " +
                          std::to_string(task.input_dim) + "->" +
                          std::to_string(task.output_dim));
    }

    Rng init_rng = Rng::stream(seed, 0);
    ToyModel model;
    const std::size_t dims[3] = {arch.input, arch.hidden, arch.output};
    for (std::size_t l = 0; l < 2; ++l) {
        const std::size_t d = dims[l];
        const std::size_t f = dims[l + 1];
        Tensor w = Tensor::from_data({d, f}, init_rng.normal_vector(d * f, 1.0 / std::sqrt(d)), true);
        Tensor b = Tensor::zeros({f}, true);
        model.layers.push_back({w, b, nullptr});
    }

    const Dataset data = make_pretrain_data(task);
    std::vector<Tensor> params;
    for (auto& layer : model.layers) {
        params.push_back(layer.w);
        params.push_back(layer.b);
    }

    Rng shuffle_rng = Rng::stream(seed, 1);
    const std::size_t count = data.x.shape()[0];
    const std::size_t batch = std::min(options.batch_size, count);
    auto order = iota_order(count);

    const double initial = full_loss(model, data);
    double current = initial;
    std::size_t epoch = 0;
    for (; epoch < options.max_epochs && current >= options.loss_threshold; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t lo = 0; lo < count; lo += batch) {
            const std::size_t hi = std::min(lo + batch, count);
            const Tensor xb = gather_rows(data.x, order, lo, hi);
            const Tensor yb = gather_rows(data.y, order, lo, hi);
            const Tensor loss = loss_mse(model.forward(xb), yb);
            backward(loss);
            sgd_step(params, options.lr);
        }
        current = full_loss(model, data);
    }

    if (current >= options.loss_threshold) {
        std::ostringstream os;
        os << "make_pretrained: did not reach loss " << options.loss_threshold
           << " after " << epoch << " epochs (initial " << initial
           << ", final " << current << "); raise max_epochs or the threshold";
        throw SetupError(os.str());
    }

    for (auto& layer : model.layers) {
        layer.w.set_requires_grad(false);
        layer.b.set_requires_grad(false);
    }
    if (report) {
        report->initial_loss = initial;
        report->final_loss = current;
        report->threshold = options.loss_threshold;
        report->epochs = epoch;
    }
    return model;
}

// --- finetuning -------------------------------------------------------------

FinetuneResult finetune(const ToyModel& base, const AdapterConfig& config,
                        const TaskSpec& task, const FinetuneOptions& options) {
    ToyModel model = base.copy_base();
    Rng adapter_rng = Rng::stream(options.seed, 2);
    model.attach_adapters(config, adapter_rng);

    const Dataset data = make_finetune_data(task);

    FinetuneResult result;
    result.frozen_loss = full_loss(base, data);

    // Per-layer snapshots for distance and energy deltas.
    std::vector<Tensor> w0;
    for (const auto& layer : model.layers) {
        w0.push_back(layer.w.clone());
    }

    std::vector<Tensor> params = model.adapter_parameters();
    Rng shuffle_rng = Rng::stream(options.seed, 3);
    const std::size_t count = data.x.shape()[0];
    const std::size_t batch = std::min(options.batch_size, count);
    const std::size_t batches_per_epoch = (count + batch - 1) / batch;
    const std::size_t total_steps = std::max<std::size_t>(1, options.epochs * batches_per_epoch);
    auto order = iota_order(count);

    const double divergence_bar = options.divergence_factor * result.frozen_loss;
    bool halted = false;          // non-finite loss seen; parameters frozen
    double halted_loss = 0.0;
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        if (!halted) {
            shuffle_rng.shuffle(order);
            for (std::size_t lo = 0; lo < count; lo += batch) {
                const std::size_t hi = std::min(lo + batch, count);
                const Tensor xb = gather_rows(data.x, order, lo, hi);
                const Tensor yb = gather_rows(data.y, order, lo, hi);
                const Tensor loss = loss_mse(model.forward(xb), yb);
                if (!std::isfinite(loss.value())) {
                    halted = true;
                    halted_loss = loss.value();
                    break;
                }
                backward(loss);
                const double lr = options.cosine
                    ? options.lr * 0.5 *
                          (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                          static_cast<double>(total_steps)))
                    : options.lr;
                sgd_step(params, lr);
                ++step;
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.loss = halted ? halted_loss : full_loss(model, data);

        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const MetricsRecord record =
                measure_layer(*model.layers[l].adapter, w0[l],
                              merge(model.layers[l]), options.he_exponent);
            em.transform_distance += record.transform_distance;
            em.weights_distance += record.weights_distance;
            em.delta_he += record.delta_he;
            em.max_block_factor_distance =
                std::max(em.max_block_factor_distance, record.max_block_factor_distance);
        }
        em.diverged = !std::isfinite(em.loss) || em.loss > divergence_bar;
        result.per_epoch.push_back(em);
    }

    if (!result.per_epoch.empty()) {
        result.final_loss = result.per_epoch.back().loss;
        result.diverged = result.per_epoch.back().diverged;
    }
    result.model = std::move(model);
    return result;
}

// --- learning-rate sweep ------------------------------------------------------

double method_lr_unit(Method method) {
    // Working step sizes on the reference task; the reflection-based methods
    // tolerate far larger steps than the matrix-parametrized ones.
    switch (method) {
        case Method::Ether: return 1.0;
        case Method::EtherPlus: return 0.15;
        case Method::Oft: return 0.25;
        case Method::Naive: return 0.25;
        case Method::Lora: return 0.1;
    }
    return 0.1;
}

SweepResult lr_sweep(const TaskSpec& task, const ModelArch& arch,
                     const SweepOptions& options) {
    if (options.methods.empty() || options.lr_multipliers.empty()) {
        throw ConfigError("lr_sweep: methods and lr grid must be non-empty");
    }
    const auto [min_it, max_it] =
        std::minmax_element(options.lr_multipliers.begin(), options.lr_multipliers.end());
    if (*min_it <= 0.0 || std::log10(*max_it / *min_it) < 4.0 - 1e-9) {
        throw ConfigError("lr_sweep: lr grid must be positive and span at least 4 "
                          "orders of magnitude");
    }

    const ToyModel base = make_pretrained(task, arch, task.pretrain_seed);

    struct Cell {
        Method method;
        double lr;
        FinetuneResult result;
    };
    std::vector<Cell> cells;
    for (const Method method : options.methods) {
        const double unit = options.lr_unit_override.value_or(method_lr_unit(method));
        for (const double mult : options.lr_multipliers) {
            cells.push_back({method, mult * unit, {}});
        }
    }

    parallel_for(cells.size(), options.threads, [&](std::size_t i) {
        AdapterConfig config;
        config.method = cells[i].method;
        config.blocks = options.blocks;
        config.rank = options.rank;
        config.two_sided = options.two_sided;
        FinetuneOptions train = options.train;
        train.lr = cells[i].lr;
        train.seed = Rng::stream(options.master_seed, i).next_u64();
        cells[i].result = finetune(base, config, task, train);
    });

    SweepResult out;
    out.frozen_loss = cells.empty() ? 0.0 : cells.front().result.frozen_loss;
    for (const auto& cell : cells) {
        for (const auto& em : cell.result.per_epoch) {
            SweepRow row;
            row.method = cell.method;
            row.n = options.blocks;
            row.lr = cell.lr;
            row.epoch = em.epoch;
            row.loss = em.loss;
            row.transform_distance = em.transform_distance;
            row.weights_distance = em.weights_distance;
            row.delta_he = em.delta_he;
            row.max_block_factor_distance = em.max_block_factor_distance;
            row.diverged = em.diverged;
            out.rows.push_back(row);
        }
    }

    for (const Method method : options.methods) {
        MethodSummary summary;
        summary.method = method;
        std::vector<const Cell*> mine;
        for (const auto& cell : cells) {
            if (cell.method == method) {
                mine.push_back(&cell);
            }
        }
        for (const Cell* cell : mine) {
            const double loss = std::isfinite(cell->result.final_loss)
                                    ? cell->result.final_loss
                                    : std::numeric_limits<double>::infinity();
            if (loss < summary.best_loss) {
                summary.best_loss = loss;
                summary.best_lr = cell->lr;
            }
            if (cell->lr > summary.largest_lr) {
                summary.largest_lr = cell->lr;
                summary.distance_at_largest_lr =
                    cell->result.per_epoch.empty()
                        ? 0.0
                        : cell->result.per_epoch.back().transform_distance;
            }
        }
        if (std::isfinite(summary.best_loss)) {
            for (const Cell* cell : mine) {
                if (std::isfinite(cell->result.final_loss) &&
                    cell->result.final_loss <= 1.1 * summary.best_loss) {
                    summary.robust_lrs.push_back(cell->lr);
                }
            }
        }
        if (summary.robust_lrs.size() > 1) {
            const auto [lo, hi] =
                std::minmax_element(summary.robust_lrs.begin(), summary.robust_lrs.end());
            summary.robust_span_decades = std::log10(*hi / *lo);
        }
        out.summaries.push_back(summary);
    }
    return out;
}

// --- perturbation sweep --------------------------------------------------------

namespace {

// Smallest t in [0, hi] with f(t) ~= target for increasing f.
template <typename F>
double bisect_increasing(const F& f, double hi, double target) {
    double lo = 0.0;
    for (int iter = 0; iter < 80; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void overwrite(Tensor& t, const std::vector<double>& values) {
    t.mutable_data() = values;
}

// Sets one layer's adapter to a random transformation at the requested
// distance; returns false when the method cannot reach it.
bool realize_strength(Adapter& adapter, Method method, double strength, Rng& rng) {
    constexpr double kReachTolerance = 1e-6;
    switch (method) {
        case Method::Ether:
            // Distance is fixed by construction; directions are already random.
            return true;
        case Method::EtherPlus: {
            auto& ep = dynamic_cast<EtherPlusAdapter&>(adapter);
            // Interpolate every v from its u toward an independent direction.
            struct Pair {
                std::vector<double> u, w;
            };
            std::vector<Pair> left, right;
            for (auto& u : ep.left_u()) {
                left.push_back({u.data(), rng.normal_vector(u.size())});
            }
            for (auto& u : ep.right_u()) {
                right.push_back({u.data(), rng.normal_vector(u.size())});
            }
            auto apply_tau = [&](double tau) {
                for (std::size_t i = 0; i < left.size(); ++i) {
                    std::vector<double> v(left[i].u.size());
                    const double un = frobenius_norm_vec(left[i].u);
                    const double wn = frobenius_norm_vec(left[i].w);
                    for (std::size_t k = 0; k < v.size(); ++k) {
                        v[k] = (1.0 - tau) * left[i].u[k] / un + tau * left[i].w[k] / wn;
                    }
                    overwrite(ep.left_v()[i], v);
                }
                for (std::size_t i = 0; i < right.size(); ++i) {
                    std::vector<double> v(right[i].u.size());
                    const double un = frobenius_norm_vec(right[i].u);
                    const double wn = frobenius_norm_vec(right[i].w);
                    for (std::size_t k = 0; k < v.size(); ++k) {
                        v[k] = (1.0 - tau) * right[i].u[k] / un + tau * right[i].w[k] / wn;
                    }
                    overwrite(ep.right_v()[i], v);
                }
                return transformation_distance(ep);
            };
            if (strength == 0.0) {
                apply_tau(0.0);
                return true;
            }
            const double reachable = apply_tau(1.0);
            if (strength > reachable + kReachTolerance) {
                return false;
            }
            apply_tau(bisect_increasing(apply_tau, 1.0, strength));
            return true;
        }
        case Method::Oft: {
            auto& oft = dynamic_cast<OftAdapter&>(adapter);
            std::vector<std::vector<double>> dirs;
            for (auto& r : oft.r_blocks()) {
                dirs.push_back(rng.normal_vector(r.size()));
            }
            auto apply_t = [&](double t) {
                for (std::size_t i = 0; i < dirs.size(); ++i) {
                    std::vector<double> r(dirs[i].size());
                    for (std::size_t k = 0; k < r.size(); ++k) {
                        r[k] = t * dirs[i][k];
                    }
                    overwrite(oft.r_blocks()[i], r);
                }
                return transformation_distance(oft);
            };
            if (strength == 0.0) {
                apply_t(0.0);
                return true;
            }
            // The Cayley image saturates as t grows; find a bracket first.
            double hi = 1.0;
            while (apply_t(hi) < strength && hi < 1e8) {
                hi *= 2.0;
            }
            if (apply_t(hi) + kReachTolerance < strength) {
                return false;
            }
            apply_t(bisect_increasing(apply_t, hi, strength));
            return true;
        }
        case Method::Naive: {
            auto& naive = dynamic_cast<NaiveAdapter&>(adapter);
            std::vector<std::vector<double>> dirs;
            double total_sq = 0.0;
            for (auto& blk : naive.n_blocks()) {
                dirs.push_back(rng.normal_vector(blk.size()));
                const double norm = frobenius_norm_vec(dirs.back());
                total_sq += norm * norm;
            }
            const double total = std::sqrt(total_sq);
            for (std::size_t i = 0; i < dirs.size(); ++i) {
                const std::size_t m = naive.n_blocks()[i].rows();
                std::vector<double> blk(m * m, 0.0);
                for (std::size_t r = 0; r < m; ++r) {
                    blk[r * m + r] = 1.0;
                }
                for (std::size_t k = 0; k < blk.size(); ++k) {
                    blk[k] += strength * dirs[i][k] / total;
                }
                overwrite(naive.n_blocks()[i], blk);
            }
            return true;
        }
        case Method::Lora: {
            auto& lora = dynamic_cast<LoraAdapter&>(adapter);
            // Rank-one delta of exact Frobenius norm `strength`.
            const std::size_t d = lora.a().shape()[0];
            const std::size_t r = lora.a().shape()[1];
            const std::size_t f = lora.b().shape()[1];
            auto u = rng.normal_vector(d);
            auto v = rng.normal_vector(f);
            const double un = frobenius_norm_vec(u);
            const double vn = frobenius_norm_vec(v);
            std::vector<double> a(d * r, 0.0);
            std::vector<double> b(r * f, 0.0);
            for (std::size_t i = 0; i < d; ++i) {
                a[i * r] = strength * u[i] / un;
            }
            for (std::size_t j = 0; j < f; ++j) {
                b[j] = v[j] / vn;
            }
            overwrite(lora.a(), a);
            overwrite(lora.b(), b);
            return true;
        }
    }
    return false;
}

} // namespace

std::vector<PerturbRow> perturbation_sweep(const ToyModel& base,
                                           const PerturbOptions& options) {
    const std::size_t input_dim = base.layers.front().in_dim();
    Rng probe_rng = Rng::stream(options.seed, 0);
    const Tensor probes = sample_inputs(probe_rng, options.probe_count, input_dim);
    const Tensor y0 = base.forward(probes);
    const double y0_norm = frobenius_norm(y0);

    std::vector<PerturbRow> rows;
    std::uint64_t draw = 0;
    for (const Method method : options.methods) {
        std::vector<double> strengths = options.strengths;
        if (method == Method::Ether) {
            // Single point at the construction-fixed distance 2*sqrt(n).
            strengths = {2.0 * std::sqrt(static_cast<double>(options.blocks))};
        }
        for (const double strength : strengths) {
            ToyModel model = base.copy_base();
            Rng rng = Rng::stream(options.seed, 1 + draw++);
            AdapterConfig config{method, options.blocks, options.rank, true};
            bool ok = true;
            double realized = 0.0;
            for (auto& layer : model.layers) {
                layer.adapter = make_adapter(config, layer.in_dim(), layer.out_dim(), rng);
                if (!realize_strength(*layer.adapter, method, strength, rng)) {
                    ok = false;
                    break;
                }
                realized = std::max(realized, transformation_distance(*layer.adapter));
            }
            PerturbRow row;
            row.method = method;
            row.strength = method == Method::Ether ? realized : strength;
            if (!ok) {
                row.applicable = false;
                row.deviation = std::numeric_limits<double>::quiet_NaN();
            } else {
                const Tensor y1 = model.forward(probes);
                row.deviation = frobenius_distance(y0, y1) / y0_norm;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

// --- ablations -----------------------------------------------------------------

namespace {

AblateRow ablate_one(const ToyModel& base, const AdapterConfig& config,
                     const TaskSpec& task, const FinetuneOptions& options) {
    const FinetuneResult result = finetune(base, config, task, options);
    AblateRow row;
    row.method = config.method;
    row.n = config.blocks;
    row.two_sided = config.method == Method::EtherPlus && config.two_sided;
    for (const auto& layer : base.layers) {
        row.params += param_count(config.method, layer.w.shape()[0], layer.w.shape()[1],
                                  config.blocks, config.rank, row.two_sided);
        const OpCount ops =
            op_count(layer.w.shape()[0], layer.w.shape()[1], config.blocks);
        row.ops.multiplications += ops.multiplications;
        row.ops.additions += ops.additions;
    }
    row.final_loss = result.final_loss;
    return row;
}

} // namespace

std::vector<AblateRow> ablate_blocks(const ToyModel& base, Method method,
                                     const std::vector<std::size_t>& n_grid,
                                     const TaskSpec& task,
                                     const FinetuneOptions& options) {
    std::vector<AblateRow> rows;
    for (const std::size_t n : n_grid) {
        AdapterConfig config{method, n, 4, true};
        rows.push_back(ablate_one(base, config, task, options));
    }
    return rows;
}

std::vector<AblateRow> ablate_sidedness(const ToyModel& base, const TaskSpec& task,
                                        const FinetuneOptions& options,
                                        std::size_t blocks) {
    std::vector<AblateRow> rows;
    for (const bool two_sided : {true, false}) {
        AdapterConfig config{Method::EtherPlus, blocks, 4, two_sided};
        rows.push_back(ablate_one(base, config, task, options));
    }
    return rows;
}

} // namespace ether
