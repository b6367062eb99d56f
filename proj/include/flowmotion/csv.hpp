// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace flowmotion {

/// Minimal RFC-4180 CSV writer: stable column order, quoting only when a
/// field needs it, CRLF-free (LF line ends — consumers here are our own
/// tools and spreadsheets accept both).
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> columns)
        : columns_(std::move(columns)) {
        rows_.push_back(columns_);
    }

    std::size_t column_count() const { return columns_.size(); }

    void add_row(std::vector<std::string> cells) {
        cells.resize(columns_.size());
        rows_.push_back(std::move(cells));
    }

    std::string str() const {
        std::string out;
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out += ',';
                out += quote(row[i]);
            }
            out += '\n';
        }
        return out;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary);
        f << str();
    }

    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q += c;
        }
        q += '"';
        return q;
    }

    static std::string num(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return buf;
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace flowmotion
