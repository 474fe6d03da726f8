#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hat/metrics.hpp"
#include "hat/pvalue_assignment.hpp"
#include "hat/tree.hpp"

namespace hat {

/// Input problem tied to a file line (1-based; 0 when not line-specific).
class InputError : public std::runtime_error {
public:
    InputError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

std::string read_file(const std::string& path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  // source line of each row
};

/// RFC-4180 parsing: quoted fields may hold commas, doubled quotes and
/// newlines. Blank lines are skipped. Every row must match the header width.
CsvTable parse_csv(std::string_view text);

/// Quotes a field when it contains a comma, quote or line break.
std::string csv_field(std::string_view s);
/// Shortest round-trip text is not required; 17 significant digits are.
std::string format_double(double v);
double parse_double(std::string_view s, std::size_t line);

/// `node,pvalue` rows, nodes by label or "#id". Every internal node must be
/// present; leaf rows are rejected.
PValueAssignment read_pvalues_csv(std::string_view text, const Tree& t);
std::string write_pvalues_csv(const Tree& t, const PValueAssignment& pv);

/// `leaf,y` rows, one per leaf; returned in leaf order.
std::vector<double> read_leaf_values_csv(std::string_view text, const Tree& t);

/// Header of leaf labels (any order), one row per observation; columns are
/// returned permuted into leaf order.
Eigen::MatrixXd read_design_csv(std::string_view text, const Tree& t);
/// A single `y` column.
Eigen::VectorXd read_response_csv(std::string_view text);

/// {"p": .., "sizes": [..], "groups": [[leaf labels]..]} for tree-derived
/// partitions.
std::string partition_to_json(const Tree& t, const Partition& c);

/// Per-leaf group labels from {"sizes": [..]} (contiguous groups) or
/// {"labels": [..]} (one group id per leaf).
std::vector<int> read_partition_json(std::string_view text);

}  // namespace hat
