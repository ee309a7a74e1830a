#pragma once

#include <cstdio>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace waterscreen {

// Minimal RFC-4180-ish CSV table. Quoted fields with embedded commas,
// doubled quotes and newlines are handled on read; fields needing quoting
// are quoted on write. The missing marker in files is the literal "NA";
// in memory missing numerics are NaN.
class CsvTable {
public:
    static CsvTable read_file(const std::string& path);
    static CsvTable from_string(const std::string& text, const std::string& origin = "<string>");

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return cells_.size(); }
    std::size_t cols() const { return header_.size(); }

    bool has_column(const std::string& name) const;
    // Column index by exact header name; throws ParseError naming the file.
    std::size_t col(const std::string& name) const;

    const std::string& cell(std::size_t row, std::size_t col) const { return cells_[row][col]; }

    bool is_na(std::size_t row, std::size_t col) const;
    // NaN when the cell is "NA" or empty.
    double num(std::size_t row, std::size_t col) const;
    // Throws ParseError on NA or non-integer text.
    long long integer(std::size_t row, std::size_t col) const;

    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> cells_;
};

// Streaming writer producing deterministic output: doubles with "%.10g",
// NaN as "NA", '\n' line endings.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void write_row(const std::vector<std::string>& fields);
    void close();

    static std::string format_double(double v);
    static std::string format_int(long long v);

private:
    std::string path_;
    FILE* f_ = nullptr;
};

std::string csv_escape(const std::string& field);

} // namespace waterscreen
