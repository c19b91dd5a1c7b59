// SPDX-License-Identifier: Apache-2.0

#include "ether/csv.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ether/errors.hpp"

namespace ether {

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

namespace {

bool needs_quoting(const std::string& field) {
    return field.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quoted(const std::string& field) {
    if (!needs_quoting(field)) {
        return field;
    }
    std::string out = "\"";
    for (const char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

CsvWriter::CsvWriter(std::string path, std::vector<std::string> comment_lines,
                     std::vector<std::string> header)
    : path_(std::move(path)), tmp_path_(path_ + ".tmp"), columns_(header.size()) {
    for (const auto& line : comment_lines) {
        buffer_ += "# " + line + "\n";
    }
    row(header);
}

CsvWriter::~CsvWriter() {
    if (!finished_) {
        std::error_code ec;
        std::filesystem::remove(tmp_path_, ec);
    }
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) {
        throw ContractError("csv: row has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(columns_));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) {
            buffer_ += ',';
        }
        buffer_ += quoted(fields[i]);
    }
    buffer_ += '\n';
}

void CsvWriter::finish() {
    if (finished_) {
        return;
    }
    {
        std::ofstream out(tmp_path_, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("csv: cannot open '" + tmp_path_ + "' for writing");
        }
        out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        if (!out) {
            throw IoError("csv: write failed for '" + tmp_path_ + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp_path_, path_, ec);
    if (ec) {
        throw IoError("csv: cannot move '" + tmp_path_ + "' to '" + path_ + "': " +
                      ec.message());
    }
    finished_ = true;
}

} // namespace ether
