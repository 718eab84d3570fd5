#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedgate/dataset.hpp"
#include "fedgate/model.hpp"

namespace fedgate {

struct AttributeObservation {
    std::string attribute;
    double actual = 0.0;     // mean of the unfiltered column
    double normal = 0.0;     // expected value before filtering
    double optimized = 0.0;  // expected value after filtering
};

/// Signed percentage deviations. An empty optional marks a zero denominator.
struct DeviationReport {
    std::string attribute;
    std::optional<double> nta;          // (actual - normal) / actual
    std::optional<double> ota;          // (actual - optimized) / actual
    std::optional<double> otn;          // (optimized - normal) / normal
    std::optional<double> improvement;  // (nta - ota) / nta
};

struct PlotLine {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

struct ExperimentResult {
    std::string dataset;
    std::string x_col;
    std::string y_col;
    double width = 2.0;
    std::size_t raw_rows = 0;
    std::vector<AttributeObservation> observations;  // x attribute first, then y
    std::vector<DeviationReport> deviations;
    std::vector<std::size_t> filtered_rows;  // per attribute, single-column filter
    std::size_t joint_filtered_rows = 0;     // rows passing both windows

    // Scatter data and least-squares lines for plotting.
    std::vector<std::pair<double, double>> raw_points;
    std::vector<std::pair<double, double>> filtered_points;
    std::optional<PlotLine> raw_line;
    std::optional<PlotLine> filtered_line;
};

/// (min + max) / 2 of a column. Throws DataError on an empty column.
double expected_midrange(const Dataset& dataset, const std::string& column);

AttributeObservation observe_attribute(const Dataset& dataset, const std::string& column, double width = 2.0);

DeviationReport deviation_matrix(const AttributeObservation& obs);

ExperimentResult run_filter_experiment(const Dataset& dataset, const std::string& x_col, const std::string& y_col,
                                       double width = 2.0);

/// Writes <dataset>_{raw,filtered}_{points,line}.csv with header x,y and
/// returns the paths in that order.
std::vector<std::filesystem::path> emit_plot_data(const ExperimentResult& result,
                                                  const std::filesystem::path& out_dir);

}  // namespace fedgate
