#include "ufmri/csv.hpp"

#include <cstdio>
#include <sstream>

namespace ufmri {

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path, std::ios::trunc), cols_(header.size()) {
    UFMRI_CHECK(out_.good(), "cannot open for writing: " + path);
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    UFMRI_CHECK(cells.size() == cols_, "csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
    out_.flush();
}

void CsvWriter::row_values(const std::string& label, const std::vector<double>& values) {
    std::vector<std::string> cells{label};
    for (double v : values) cells.push_back(num(v));
    row(cells);
}

std::string CsvWriter::num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

int CsvTable::col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable CsvTable::read(const std::string& path) {
    std::ifstream in(path);
    UFMRI_CHECK(in.good(), "cannot open: " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

} // namespace ufmri
