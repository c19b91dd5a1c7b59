// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ether/adapters.hpp"
#include "ether/metrics.hpp"
#include "ether/rng.hpp"
#include "ether/tensor.hpp"

namespace ether {

// --- task and model ------------------------------------------------------

struct TaskSpec {
    enum class Kind { Regression, Classification };

    Kind kind = Kind::Regression;
    std::size_t input_dim = 32;
    std::size_t output_dim = 16;
    std::size_t pretrain_samples = 4096;
    std::size_t finetune_samples = 1024;
    std::uint64_t pretrain_seed = 11;
    std::uint64_t shift_seed = 17;
    // Finetune targets are the pretrain targets pushed through a random
    // rotation of the output space plus a bias offset; both scale with this
    // magnitude, so zero means the two distributions coincide.
    double shift_magnitude = 0.4;
};

TaskSpec::Kind task_kind_from_string(const std::string& name);
std::string to_string(TaskSpec::Kind kind);

struct ModelArch {
    std::size_t input = 32;
    std::size_t hidden = 64;
    std::size_t output = 16;
};

struct Dataset {
    Tensor x;
    Tensor y;
};

Dataset make_pretrain_data(const TaskSpec& task);
Dataset make_finetune_data(const TaskSpec& task);

// Two adapted linear layers with a tanh between them. Base weights are
// shared frozen leaves once pretraining finishes.
struct ToyModel {
    std::vector<AdaptedLinear> layers;

    Tensor forward(const Tensor& x) const;
    void attach_adapters(const AdapterConfig& config, Rng& rng);
    void detach_adapters();
    std::vector<Tensor> adapter_parameters() const;

    // Fresh frozen copies of W and b, no adapters attached.
    ToyModel copy_base() const;
    // Flat snapshot of all base weights, for bit-identity checks.
    std::vector<double> base_fingerprint() const;
};

struct PretrainOptions {
    double lr = 0.3;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 400;
    double loss_threshold = 0.02;
};

struct PretrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double threshold = 0.0;
    std::size_t epochs = 0;
};

// Trains the base model on the pretrain distribution until the loss drops
// below the threshold; throws SetupError with diagnostics otherwise.
// Deterministic in (task, arch, seed).
ToyModel make_pretrained(const TaskSpec& task, const ModelArch& arch,
                         std::uint64_t seed, const PretrainOptions& options = {},
                         PretrainReport* report = nullptr);

// --- finetuning -----------------------------------------------------------

struct FinetuneOptions {
    double lr = 0.1;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    bool cosine = false; // cosine-annealed step size, floor at zero
    std::uint64_t seed = 0;
    double divergence_factor = 10.0; // diverged when loss > factor * frozen loss
    double he_exponent = 1.0;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;
    double transform_distance = 0.0;
    double weights_distance = 0.0;
    double delta_he = 0.0;
    double max_block_factor_distance = 0.0;
    bool diverged = false;
};

struct FinetuneResult {
    std::vector<EpochMetrics> per_epoch;
    double frozen_loss = 0.0; // base model loss on the finetune data
    double final_loss = std::numeric_limits<double>::infinity();
    bool diverged = false;
    ToyModel model; // trained copy (frozen base + trained adapters)
};

// Trains fresh adapters on a copy of the base model; the base itself is
// never touched. NaN/Inf losses mark the run diverged; recording continues.
FinetuneResult finetune(const ToyModel& base, const AdapterConfig& config,
                        const TaskSpec& task, const FinetuneOptions& options);

// --- learning-rate sweep ---------------------------------------------------

// Per-method step-size unit; grid multipliers scale it.
double method_lr_unit(Method method);

struct SweepOptions {
    std::vector<Method> methods = all_methods();
    // Grid is multiplier * unit(method); must span at least 4 decades.
    std::vector<double> lr_multipliers = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
    std::optional<double> lr_unit_override; // same unit for all methods
    std::size_t blocks = 1;
    std::size_t rank = 4;
    bool two_sided = true;
    FinetuneOptions train;
    std::uint64_t master_seed = 0;
    std::size_t threads = 1;
};

struct SweepRow {
    Method method = Method::Ether;
    std::size_t n = 1;
    double lr = 0.0;
    std::size_t epoch = 0;
    double loss = 0.0;
    double transform_distance = 0.0;
    double weights_distance = 0.0;
    double delta_he = 0.0;
    double max_block_factor_distance = 0.0;
    bool diverged = false;
};

struct MethodSummary {
    Method method = Method::Ether;
    double best_lr = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();
    double largest_lr = 0.0;
    double distance_at_largest_lr = 0.0;
    // Learning rates whose final loss is within 10% of the best.
    std::vector<double> robust_lrs;
    double robust_span_decades = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<MethodSummary> summaries;
    double frozen_loss = 0.0;
};

SweepResult lr_sweep(const TaskSpec& task, const ModelArch& arch,
                     const SweepOptions& options);

// --- perturbation sweep -----------------------------------------------------

struct PerturbOptions {
    std::vector<Method> methods = {Method::Ether, Method::EtherPlus, Method::Oft,
                                   Method::Naive};
    std::vector<double> strengths = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0};
    std::size_t blocks = 1;
    std::size_t rank = 4;
    std::size_t probe_count = 64;
    std::uint64_t seed = 0;
};

struct PerturbRow {
    Method method = Method::Ether;
    double strength = 0.0;  // per-layer distance of the sampled factor
    double deviation = 0.0; // ||y' - y||_F / ||y||_F over the probe batch
    bool applicable = true; // false when the method cannot reach the strength
};

// For each strength, samples a transformation at that per-layer
// transformation distance, applies it to every adapted layer, and measures
// the relative output deviation. ETHER contributes a single point at its
// construction-fixed distance.
std::vector<PerturbRow> perturbation_sweep(const ToyModel& base,
                                           const PerturbOptions& options);

// --- ablations ---------------------------------------------------------------

struct AblateRow {
    Method method = Method::Ether;
    std::size_t n = 1;
    bool two_sided = false;
    std::size_t params = 0; // summed over layers
    OpCount ops;            // summed over layers
    double final_loss = 0.0;
};

std::vector<AblateRow> ablate_blocks(const ToyModel& base, Method method,
                                     const std::vector<std::size_t>& n_grid,
                                     const TaskSpec& task,
                                     const FinetuneOptions& options);

std::vector<AblateRow> ablate_sidedness(const ToyModel& base, const TaskSpec& task,
                                        const FinetuneOptions& options,
                                        std::size_t blocks = 1);

} // namespace ether
