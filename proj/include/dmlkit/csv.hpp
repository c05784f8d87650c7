#pragma once

#include <string>
#include <vector>

namespace dmlkit {

/// Minimal CSV support for the pipeline's file contracts: UTF-8, comma
/// separated, one header row, '.' decimal separator, no quoting.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

/// Format a double so that it round-trips exactly ("%.17g").
std::string format_full(double x);
/// Compact fixed-significance format for report tables ("%.6g").
std::string format_short(double x);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(std::vector<std::string> cells);
    std::string str() const;
    void write_file(const std::string& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Write a whole file in one shot (used for deterministic outputs).
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace dmlkit
