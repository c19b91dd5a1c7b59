// SPDX-License-Identifier: Apache-2.0

#include "ether/commands.hpp"

#include <cmath>
#include <map>
#include <ostream>

#include "ether/checkpoint.hpp"
#include "ether/csv.hpp"
#include "ether/errors.hpp"
#include "ether/harness.hpp"

namespace ether {

namespace {

void require_out(const ExperimentConfig& config) {
    if (config.out_path.empty()) {
        throw ConfigError("this command needs an output path (out=... or --out)");
    }
}

FinetuneOptions train_options(const ExperimentConfig& config) {
    FinetuneOptions train;
    train.epochs = config.epochs;
    train.batch_size = config.batch_size;
    train.cosine = config.cosine;
    train.he_exponent = config.he_exponent;
    train.seed = config.seed;
    return train;
}

double effective_lr(const ExperimentConfig& config, Method method) {
    return config.lr > 0.0 ? config.lr : method_lr_unit(method);
}

} // namespace

std::size_t cmd_verify(const VerifyOptions& options, std::ostream& out) {
    return print_verification(out, run_verification(options));
}

void cmd_sweep(const ExperimentConfig& config) {
    require_out(config);

    SweepOptions options;
    options.methods = config.methods;
    options.lr_multipliers = config.lr_grid;
    if (config.lr > 0.0) {
        options.lr_unit_override = config.lr;
    }
    options.blocks = config.blocks;
    options.rank = config.rank;
    options.two_sided = config.two_sided;
    options.train = train_options(config);
    options.master_seed = config.seed;
    options.threads = config.threads;

    const SweepResult result = lr_sweep(config.task, config.arch(), options);

    CsvWriter csv(config.out_path, config.echo(),
                  {"method", "n", "lr", "epoch", "loss", "transform_distance",
                   "weights_distance", "delta_he", "diverged"});
    for (const auto& row : result.rows) {
        csv.row({to_string(row.method), std::to_string(row.n), format_double(row.lr),
                 std::to_string(row.epoch), format_double(row.loss),
                 format_double(row.transform_distance),
                 format_double(row.weights_distance), format_double(row.delta_he),
                 row.diverged ? "true" : "false"});
    }
    csv.finish();
}

void cmd_perturb(const ExperimentConfig& config) {
    require_out(config);

    const ToyModel base =
        make_pretrained(config.task, config.arch(), config.task.pretrain_seed);

    PerturbOptions options;
    options.methods = config.methods;
    options.strengths = config.strength_grid;
    options.blocks = config.blocks;
    options.rank = config.rank;
    options.seed = config.seed;

    const auto rows = perturbation_sweep(base, options);

    CsvWriter csv(config.out_path, config.echo(), {"method", "strength", "deviation"});
    for (const auto& row : rows) {
        csv.row({to_string(row.method), format_double(row.strength),
                 row.applicable ? format_double(row.deviation) : "na"});
    }
    csv.finish();
}

void cmd_ablate(const ExperimentConfig& config) {
    require_out(config);

    const ToyModel base =
        make_pretrained(config.task, config.arch(), config.task.pretrain_seed);

    std::vector<AblateRow> rows;
    for (const Method method : config.methods) {
        if (method == Method::Lora) {
            continue; // no block structure to ablate
        }
        FinetuneOptions train = train_options(config);
        train.lr = effective_lr(config, method);
        const auto block_rows =
            ablate_blocks(base, method, config.block_grid, config.task, train);
        rows.insert(rows.end(), block_rows.begin(), block_rows.end());
        if (method == Method::EtherPlus) {
            const auto side_rows =
                ablate_sidedness(base, config.task, train, config.blocks);
            rows.insert(rows.end(), side_rows.begin(), side_rows.end());
        }
    }

    CsvWriter csv(config.out_path, config.echo(),
                  {"method", "n", "two_sided", "params", "ops_mul", "ops_add",
                   "final_loss"});
    for (const auto& row : rows) {
        csv.row({to_string(row.method), std::to_string(row.n),
                 row.two_sided ? "true" : "false", std::to_string(row.params),
                 std::to_string(row.ops.multiplications),
                 std::to_string(row.ops.additions), format_double(row.final_loss)});
    }
    csv.finish();
}

void cmd_train(const ExperimentConfig& config, std::ostream& out) {
    const ToyModel base =
        make_pretrained(config.task, config.arch(), config.task.pretrain_seed);

    AdapterConfig adapter{config.method, config.blocks, config.rank, config.two_sided};
    FinetuneOptions train = train_options(config);
    train.lr = effective_lr(config, config.method);

    const FinetuneResult result = finetune(base, adapter, config.task, train);
    out << "method " << to_string(config.method) << ", lr " << format_double(train.lr)
        << ", frozen-base loss " << format_double(result.frozen_loss) << "\n";
    for (const auto& em : result.per_epoch) {
        out << "epoch " << em.epoch << "  loss " << format_double(em.loss)
            << "  transform_distance " << format_double(em.transform_distance)
            << "  weights_distance " << format_double(em.weights_distance)
            << "  delta_he " << format_double(em.delta_he)
            << (em.diverged ? "  DIVERGED" : "") << "\n";
    }

    if (!config.out_path.empty()) {
        std::map<std::string, Tensor> tensors;
        for (std::size_t l = 0; l < result.model.layers.size(); ++l) {
            const auto& layer = result.model.layers[l];
            for (const auto& [name, tensor] : layer.adapter->named_parameters()) {
                tensors.emplace("layer" + std::to_string(l) + "." + name, tensor);
            }
        }
        save_checkpoint(config.out_path, tensors);
        out << "checkpoint written to " << config.out_path << "\n";
    }
}

} // namespace ether
