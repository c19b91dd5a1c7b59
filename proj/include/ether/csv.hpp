// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace ether {

// Shortest round-trip decimal representation (deterministic for a given
// build; parses back to the identical double).
std::string format_double(double v);

// RFC-4180-style CSV writer with a '#'-prefixed comment preamble. The file
// is written to a temporary sibling and atomically renamed on finish().
class CsvWriter {
public:
    CsvWriter(std::string path, std::vector<std::string> comment_lines,
              std::vector<std::string> header);
    ~CsvWriter();

    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& fields);
    void finish();

private:
    std::string path_;
    std::string tmp_path_;
    std::string buffer_;
    std::size_t columns_ = 0;
    bool finished_ = false;
};

} // namespace ether
