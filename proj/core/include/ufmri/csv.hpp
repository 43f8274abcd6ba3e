#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "ufmri/common.hpp"

namespace ufmri {

/// Plain comma-separated writer; numbers printed with %.10g.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);
    void row_values(const std::string& label, const std::vector<double>& values);
    static std::string num(double v);

private:
    std::ofstream out_;
    std::size_t cols_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const;
    static CsvTable read(const std::string& path);
};

} // namespace ufmri
