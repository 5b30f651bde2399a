#pragma once

#include <string>
#include <vector>

namespace flameiv {

// Minimal CSV table: a header row plus string cells. Fields may be quoted
// with double quotes; embedded quotes are doubled per RFC 4180.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    long column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

std::string format_double(double x);  // shortest text that round-trips

}  // namespace flameiv
