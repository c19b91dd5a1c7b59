// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ether/adapters.hpp"
#include "ether/harness.hpp"

namespace ether {

// Flat key=value experiment configuration. Values come from an optional
// config file plus command-line overrides; overrides win. The effective
// key/value set is echoed into every output file.
struct ExperimentConfig {
    // adapter
    std::vector<Method> methods = all_methods();
    Method method = Method::Ether; // train/perturb single-method commands
    std::size_t blocks = 1;
    std::size_t rank = 4;
    bool two_sided = true;

    // training
    double lr = 0.0; // 0: use the per-method unit
    std::vector<double> lr_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    bool cosine = false;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    double he_exponent = 1.0;

    // task
    TaskSpec task;
    std::size_t hidden_dim = 64;

    // perturb / ablate grids
    std::vector<double> strength_grid = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0};
    std::vector<std::size_t> block_grid = {1, 4, 16};

    // output
    std::string out_path;

    // Applies one key=value assignment; throws ConfigError on unknown keys
    // or unparsable values (messages carry `where`, e.g. "line 3").
    void set(const std::string& key, const std::string& value, const std::string& where);

    // Effective configuration as deterministic key=value lines.
    std::vector<std::string> echo() const;

    ModelArch arch() const {
        return {task.input_dim, hidden_dim, task.output_dim};
    }
};

// Parses a flat key=value file ('#' starts a comment; blank lines allowed).
// Unknown keys are rejected with their line number.
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {});

} // namespace ether
