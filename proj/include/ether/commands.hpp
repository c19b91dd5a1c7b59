// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

#include "ether/config.hpp"
#include "ether/verify.hpp"

namespace ether {

// Command implementations behind the CLI; callable in-process for tests.
// All of them are deterministic functions of (config, seed).

// Returns the number of failed checks (0 on success).
std::size_t cmd_verify(const VerifyOptions& options, std::ostream& out);

// Learning-rate sweep; writes CSV rows
// method,n,lr,epoch,loss,transform_distance,weights_distance,delta_he,diverged.
void cmd_sweep(const ExperimentConfig& config);

// Perturbation-strength sweep; writes CSV rows method,strength,deviation
// (deviation "na" for strengths a method cannot reach).
void cmd_perturb(const ExperimentConfig& config);

// Block-count and sidedness ablations; writes CSV rows
// method,n,two_sided,params,ops_mul,ops_add,final_loss.
void cmd_ablate(const ExperimentConfig& config);

// Single finetuning run; logs per-epoch metrics and optionally saves the
// adapter tensors as a checkpoint.
void cmd_train(const ExperimentConfig& config, std::ostream& out);

} // namespace ether
