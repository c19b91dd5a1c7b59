// SPDX-License-Identifier: Apache-2.0

#include "ether/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ether/csv.hpp"
#include "ether/errors.hpp"

namespace ether {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, sep)) {
        parts.push_back(trim(item));
    }
    return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& where) {
    throw ConfigError("config: invalid value '" + value + "' for key '" + key +
                      "' (" + where + ")");
}

double parse_double(const std::string& key, const std::string& value,
                    const std::string& where) {
    try {
        std::size_t used = 0;
        const double parsed = std::stod(value, &used);
        if (used != value.size()) {
            bad_value(key, value, where);
        }
        return parsed;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, value, where);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value,
                        const std::string& where) {
    std::uint64_t parsed = 0;
    const auto [ptr, ec] =
        std::from_chars(value.data(), value.data() + value.size(), parsed);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        bad_value(key, value, where);
    }
    return parsed;
}

bool parse_bool(const std::string& key, const std::string& value,
                const std::string& where) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no" || value == "off") {
        return false;
    }
    bad_value(key, value, where);
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& items, const Fmt& fmt) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) {
            out += ",";
        }
        out += fmt(items[i]);
    }
    return out;
}

} // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value,
                           const std::string& where) {
    if (key == "methods") {
        methods.clear();
        for (const auto& name : split(value, ',')) {
            methods.push_back(method_from_string(name));
        }
        if (methods.empty()) {
            bad_value(key, value, where);
        }
    } else if (key == "method") {
        method = method_from_string(value);
    } else if (key == "blocks") {
        blocks = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "rank") {
        rank = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "two_sided") {
        two_sided = parse_bool(key, value, where);
    } else if (key == "lr") {
        lr = parse_double(key, value, where);
    } else if (key == "lr_grid") {
        lr_grid.clear();
        for (const auto& item : split(value, ',')) {
            lr_grid.push_back(parse_double(key, item, where));
        }
    } else if (key == "epochs") {
        epochs = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "batch_size") {
        batch_size = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "cosine") {
        cosine = parse_bool(key, value, where);
    } else if (key == "seed") {
        seed = parse_u64(key, value, where);
    } else if (key == "threads") {
        threads = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "he_exponent") {
        he_exponent = parse_double(key, value, where);
    } else if (key == "task_kind") {
        task.kind = task_kind_from_string(value);
    } else if (key == "input_dim") {
        task.input_dim = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "hidden_dim") {
        hidden_dim = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "output_dim") {
        task.output_dim = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "pretrain_samples") {
        task.pretrain_samples = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "finetune_samples") {
        task.finetune_samples = static_cast<std::size_t>(parse_u64(key, value, where));
    } else if (key == "pretrain_seed") {
        task.pretrain_seed = parse_u64(key, value, where);
    } else if (key == "shift_seed") {
        task.shift_seed = parse_u64(key, value, where);
    } else if (key == "shift_magnitude") {
        task.shift_magnitude = parse_double(key, value, where);
    } else if (key == "strength_grid") {
        strength_grid.clear();
        for (const auto& item : split(value, ',')) {
            strength_grid.push_back(parse_double(key, item, where));
        }
    } else if (key == "block_grid") {
        block_grid.clear();
        for (const auto& item : split(value, ',')) {
            block_grid.push_back(static_cast<std::size_t>(parse_u64(key, item, where)));
        }
    } else if (key == "out") {
        out_path = value;
    } else {
        throw ConfigError("config: unknown key '" + key + "' (" + where + ")");
    }
}

std::vector<std::string> ExperimentConfig::echo() const {
    std::vector<std::string> lines;
    lines.push_back("methods=" + join(methods, [](Method m) { return to_string(m); }));
    lines.push_back("method=" + to_string(method));
    lines.push_back("blocks=" + std::to_string(blocks));
    lines.push_back("rank=" + std::to_string(rank));
    lines.push_back(std::string("two_sided=") + (two_sided ? "true" : "false"));
    lines.push_back("lr=" + format_double(lr));
    lines.push_back("lr_grid=" + join(lr_grid, format_double));
    lines.push_back("epochs=" + std::to_string(epochs));
    lines.push_back("batch_size=" + std::to_string(batch_size));
    lines.push_back(std::string("cosine=") + (cosine ? "true" : "false"));
    lines.push_back("seed=" + std::to_string(seed));
    lines.push_back("threads=" + std::to_string(threads));
    lines.push_back("he_exponent=" + format_double(he_exponent));
    lines.push_back("task_kind=" + to_string(task.kind));
    lines.push_back("input_dim=" + std::to_string(task.input_dim));
    lines.push_back("hidden_dim=" + std::to_string(hidden_dim));
    lines.push_back("output_dim=" + std::to_string(task.output_dim));
    lines.push_back("pretrain_samples=" + std::to_string(task.pretrain_samples));
    lines.push_back("finetune_samples=" + std::to_string(task.finetune_samples));
    lines.push_back("pretrain_seed=" + std::to_string(task.pretrain_seed));
    lines.push_back("shift_seed=" + std::to_string(task.shift_seed));
    lines.push_back("shift_magnitude=" + format_double(task.shift_magnitude));
    lines.push_back("strength_grid=" + join(strength_grid, format_double));
    lines.push_back("block_grid=" +
                    join(block_grid, [](std::size_t n) { return std::to_string(n); }));
    lines.push_back("out=" + out_path);
    return lines;
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("config: cannot open '" + path + "'");
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected key=value (line " +
                              std::to_string(line_no) + ")");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        base.set(key, value, "line " + std::to_string(line_no));
    }
    return base;
}

} // namespace ether
