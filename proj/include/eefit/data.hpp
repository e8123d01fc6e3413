#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "eefit/errors.hpp"

namespace eefit {

struct IsoWeek {
    int year = 0;
    int week = 0; // 1..53
};

// Throws DataError on malformed labels ("2011-W06" expected).
IsoWeek parse_iso_week(const std::string& label);
std::string format_iso_week(const IsoWeek& w);

// Weekly counts for m units; rows are weeks t = 1..T.
struct CountsPanel {
    Eigen::MatrixXi counts;                // T x m, non-negative
    std::vector<std::string> week_labels;  // ISO week labels, length T
    std::vector<int> calendar_week;        // 1..53, length T
    std::vector<std::string> unit_names;   // length m

    int T() const { return static_cast<int>(counts.rows()); }
    int m() const { return static_cast<int>(counts.cols()); }

    // First t weeks (t >= 2).
    CountsPanel head(int t) const;

    void validate() const;
};

struct NeighbourhoodMatrix {
    Eigen::MatrixXi order; // m x m path distances, zero diagonal, symmetric
    std::vector<std::string> unit_names;

    void validate() const;
};

struct PopulationShares {
    Eigen::VectorXd share; // positive, sums to 1
    std::vector<std::string> unit_names;

    void validate() const;
};

// Named real-valued columns of length T. The calendar-derived columns
// "christmas" (weeks 52 and 1) and "trend" (t/T of the loaded panel) are
// always present; file-provided columns may not reuse those names.
struct CovariateTable {
    std::vector<std::string> names;
    Eigen::MatrixXd columns; // T x names.size()

    bool has(const std::string& name) const;
    Eigen::VectorXd column(const std::string& name) const;
    CovariateTable head(int t) const;
};

struct Dataset {
    CountsPanel counts;
    std::optional<NeighbourhoodMatrix> neighbourhood;
    std::optional<PopulationShares> populations;
    CovariateTable covariates;

    Dataset head(int t) const;
};

CountsPanel load_counts(const std::string& path);
void write_counts(const CountsPanel& panel, const std::string& path);

NeighbourhoodMatrix load_neighbourhood(const std::string& path, const std::vector<std::string>& unit_names);
PopulationShares load_populations(const std::string& path, const std::vector<std::string>& unit_names);

// x_t = 1 for calendar weeks 52 and 1, else 0 (week 53 maps to 0).
Eigen::VectorXd christmas_indicator(const CountsPanel& panel);

// Builds the table with derived columns plus optional file columns
// (CSV aligned to the panel's week labels).
CovariateTable build_covariates(const CountsPanel& panel, const std::string& covariates_path = "");

} // namespace eefit
