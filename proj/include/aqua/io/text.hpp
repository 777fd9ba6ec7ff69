// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace aqua::io {

// Numeric formatting used for every CSV/JSON number the project emits:
// 9 significant digits, "%.9g". Non-finite values print as "nan"/"inf".
std::string fmt_num(double v);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

// Small CSV builder; fields are written verbatim (callers never emit commas in them).
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void row(std::vector<std::string> fields);
    std::string str() const;
    void save(const std::filesystem::path& path) const { write_text(path, str()); }

private:
    std::size_t ncols_;
    std::string buf_;
};

std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace aqua::io
