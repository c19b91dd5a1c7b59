// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ether {

struct VerifyOptions {
    std::uint64_t seed = 1234;
    // Fault injection for testing the harness itself: builds reflection
    // factors from unnormalized directions, which must trip the
    // householder-unit-distance check.
    bool skip_normalization = false;
};

struct CheckResult {
    std::string suite;
    std::string name;
    bool passed = false;
    std::string detail;
};

// Runs every module invariant suite (tensor-core, adapters, metrics,
// harness) and returns one result per named check.
std::vector<CheckResult> run_verification(const VerifyOptions& options = {});

// Per-suite summary plus failure details; returns the number of failures.
std::size_t print_verification(std::ostream& out, const std::vector<CheckResult>& results);

} // namespace ether
