#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"

#include <cerrno>
#include <cstring>
#include <charconv>
#include <fstream>
#include <sstream>

namespace waterscreen {

namespace {

// Splits raw CSV text into rows of fields, honouring quotes. Keeps embedded
// newlines inside quoted fields. CRLF and LF both accepted.
std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& origin) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    std::size_t line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty() || field_was_quoted) {
                    throw ParseError(origin + ":" + std::to_string(line) + ": stray quote inside unquoted field");
                }
                in_quotes = true;
                field_was_quoted = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') break;
                [[fallthrough]];
            case '\n':
                end_row();
                ++line;
                break;
            default:
                field.push_back(c);
        }
    }
    if (in_quotes) {
        throw ParseError(origin + ": unterminated quoted field");
    }
    if (!field.empty() || field_was_quoted || !row.empty()) {
        end_row();
    }
    // A trailing fully-empty row (file ends in newline) is already excluded
    // by the condition above; interior blank lines are not.
    return rows;
}

} // namespace

CsvTable CsvTable::read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path + ": " + std::strerror(errno));
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failure on " + path);
    }
    return from_string(buf.str(), path);
}

CsvTable CsvTable::from_string(const std::string& text, const std::string& origin) {
    CsvTable t;
    t.origin_ = origin;
    auto rows = parse_csv(text, origin);
    if (rows.empty()) {
        throw ParseError(origin + ": empty file, expected a header row");
    }
    t.header_ = std::move(rows.front());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() == 1 && rows[r][0].empty()) continue; // blank line
        if (rows[r].size() != t.header_.size()) {
            throw ParseError(origin + ": row " + std::to_string(r + 1) + " has " +
                             std::to_string(rows[r].size()) + " fields, header has " +
                             std::to_string(t.header_.size()));
        }
        t.cells_.push_back(std::move(rows[r]));
    }
    return t;
}

bool CsvTable::has_column(const std::string& name) const {
    for (const auto& h : header_)
        if (h == name) return true;
    return false;
}

std::size_t CsvTable::col(const std::string& name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return i;
    throw ParseError(origin_ + ": missing required column '" + name + "'");
}

bool CsvTable::is_na(std::size_t row, std::size_t col) const {
    const std::string& s = cells_[row][col];
    return s.empty() || s == "NA";
}

double CsvTable::num(std::size_t row, std::size_t col) const {
    const std::string& s = cells_[row][col];
    if (s.empty() || s == "NA") return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) {
        throw ParseError(origin_ + ": row " + std::to_string(row + 2) + " column '" +
                         header_[col] + "': not a number: '" + s + "'");
    }
    return v;
}

long long CsvTable::integer(std::size_t row, std::size_t col) const {
    const std::string& s = cells_[row][col];
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw ParseError(origin_ + ": row " + std::to_string(row + 2) + " column '" +
                         header_[col] + "': not an integer: '" + s + "'");
    }
    return v;
}

CsvWriter::CsvWriter(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) {
        throw IoError("cannot create " + path + ": " + std::strerror(errno));
    }
}

CsvWriter::~CsvWriter() {
    if (f_) std::fclose(f_);
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line.push_back(',');
        line += csv_escape(fields[i]);
    }
    line.push_back('\n');
    if (std::fwrite(line.data(), 1, line.size(), f_) != line.size()) {
        throw IoError("write failure on " + path_);
    }
}

void CsvWriter::close() {
    if (f_) {
        if (std::fclose(f_) != 0) {
            f_ = nullptr;
            throw IoError("close failure on " + path_);
        }
        f_ = nullptr;
    }
}

std::string CsvWriter::format_double(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string CsvWriter::format_int(long long v) {
    return std::to_string(v);
}

std::string csv_escape(const std::string& field) {
    bool needs = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace waterscreen
