#include "flameiv/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "flameiv/errors.hpp"

namespace flameiv {

long CsvTable::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) return static_cast<long>(j);
    }
    return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line, long line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) {
        throw ValidationError("unterminated quoted field on line " + std::to_string(line_no),
                              line_no);
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);

    CsvTable table;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        auto fields = split_line(line, line_no);
        if (line_no == 1) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size()) {
                throw ValidationError("row " + std::to_string(line_no - 1) + " has " +
                                          std::to_string(fields.size()) + " fields, expected " +
                                          std::to_string(table.header.size()),
                                      line_no - 1);
            }
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) throw EmptyInputError("empty input: " + path);
    return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write file: " + path);
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (j > 0) out << ',';
        out << quote_if_needed(table.header[j]);
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j > 0) out << ',';
            out << quote_if_needed(row[j]);
        }
        out << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path);
}

std::string format_double(double x) {
    char buf[64];
    // Try the shortest representation that parses back exactly.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) return buf;
    }
    return buf;
}

}  // namespace flameiv
