// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "ether/commands.hpp"
#include "ether/errors.hpp"

namespace {

void print_usage(std::ostream& out) {
    out << "Usage: etherkit <command> [options]\n"
        << "\n"
        << "Commands:\n"
        << "  verify    run all module invariant suites\n"
        << "  sweep     learning-rate sweep over methods (CSV output)\n"
        << "  perturb   perturbation-strength sweep (CSV output)\n"
        << "  ablate    block-count and sidedness ablations (CSV output)\n"
        << "  train     single finetuning run, optional checkpoint output\n"
        << "\n"
        << "Options:\n"
        << "  --config PATH      flat key=value config file\n"
        << "  --seed U64         master seed\n"
        << "  --out PATH         output file (CSV or checkpoint)\n"
        << "  --method NAME      ether | etherplus | oft | naive | lora\n"
        << "  --lr REAL          step size (overrides the per-method unit)\n"
        << "  --blocks N         block-diagonal count\n"
        << "  --rank R           LoRA rank\n"
        << "  --two-sided BOOL   two-sided ETHER+ (true/false)\n"
        << "  --epochs N         finetuning epochs\n"
        << "  --threads N        parallel sweep workers\n"
        << "  --inject-fault F   verify only; F = skip-normalize\n"
        << "\n"
        << "Exit codes: 0 success, 1 verification failure, 2 config error, 3 I/O error.\n";
}

struct FlagSpec {
    const char* flag;
    const char* config_key;
};

constexpr FlagSpec kFlags[] = {
    {"--seed", "seed"},       {"--out", "out"},         {"--method", "method"},
    {"--lr", "lr"},           {"--blocks", "blocks"},   {"--rank", "rank"},
    {"--two-sided", "two_sided"}, {"--epochs", "epochs"}, {"--threads", "threads"},
};

int run(int argc, char** argv) {
    if (argc < 2) {
        print_usage(std::cerr);
        return 2;
    }
    const std::string command = argv[1];
    if (command == "--help" || command == "-h" || command == "help") {
        print_usage(std::cout);
        return 0;
    }

    // First pass: config file, so flags override file values.
    ether::ExperimentConfig config;
    for (int i = 2; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            config = ether::load_config_file(argv[i + 1], config);
        }
    }

    ether::VerifyOptions verify_options;
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config") {
            ++i; // handled above
            continue;
        }
        if (arg == "--inject-fault") {
            if (i + 1 >= argc) {
                throw ether::ConfigError("--inject-fault needs a fault name");
            }
            const std::string fault = argv[++i];
            if (fault != "skip-normalize") {
                throw ether::ConfigError("unknown fault '" + fault + "'");
            }
            verify_options.skip_normalization = true;
            continue;
        }
        bool matched = false;
        for (const auto& spec : kFlags) {
            if (arg == spec.flag) {
                if (i + 1 >= argc) {
                    throw ether::ConfigError("flag " + arg + " needs a value");
                }
                config.set(spec.config_key, argv[++i], "flag " + arg);
                matched = true;
                break;
            }
        }
        if (!matched) {
            throw ether::ConfigError("unknown option '" + arg + "'");
        }
    }
    verify_options.seed = config.seed == 0 ? verify_options.seed : config.seed;

    if (command == "verify") {
        return ether::cmd_verify(verify_options, std::cout) == 0 ? 0 : 1;
    }
    if (command == "sweep") {
        ether::cmd_sweep(config);
        return 0;
    }
    if (command == "perturb") {
        ether::cmd_perturb(config);
        return 0;
    }
    if (command == "ablate") {
        ether::cmd_ablate(config);
        return 0;
    }
    if (command == "train") {
        ether::cmd_train(config, std::cout);
        return 0;
    }
    throw ether::ConfigError("unknown command '" + command + "'");
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ether::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ether::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const ether::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
