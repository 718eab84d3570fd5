#include "fedgate/analysis.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "fedgate/error.hpp"

namespace fedgate {

double expected_midrange(const Dataset& dataset, const std::string& column) {
    const auto values = dataset.column(column);
    if (values.empty()) {
        throw DataError(fmt::format("midrange of empty column '{}' in '{}'", column, dataset.name()));
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return (*lo + *hi) / 2.0;
}

AttributeObservation observe_attribute(const Dataset& dataset, const std::string& column, double width) {
    AttributeObservation obs;
    obs.attribute = column;
    obs.actual = column_stats(dataset, column).mean;
    obs.normal = expected_midrange(dataset, column);
    const auto filtered = filter_2sigma(dataset, {column}, width);
    // Only a very narrow window can empty the column; report the unfiltered midrange then.
    obs.optimized = filtered.row_count() > 0 ? expected_midrange(filtered, column) : obs.normal;
    return obs;
}

namespace {

std::optional<double> percent(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den * 100.0 + 0.0;  // folds -0 into 0
}

}  // namespace

DeviationReport deviation_matrix(const AttributeObservation& obs) {
    DeviationReport r;
    r.attribute = obs.attribute;
    r.nta = percent(obs.actual - obs.normal, obs.actual);
    r.ota = percent(obs.actual - obs.optimized, obs.actual);
    r.otn = percent(obs.optimized - obs.normal, obs.normal);
    if (r.nta && r.ota) r.improvement = percent(*r.nta - *r.ota, *r.nta);
    return r;
}

namespace {

std::optional<PlotLine> regression_segment(const Dataset& d, const std::string& x_col, const std::string& y_col) {
    if (d.row_count() < 2) return std::nullopt;
    const auto xs = column_stats(d, x_col);
    if (xs.min == xs.max) return std::nullopt;
    const auto w = fit_least_squares(d, x_col, y_col);
    const double slope = w.coefficients()[0];
    return PlotLine{xs.min, slope * xs.min + w.bias(), xs.max, slope * xs.max + w.bias()};
}

std::vector<std::pair<double, double>> points(const Dataset& d, const std::string& x_col, const std::string& y_col) {
    const auto cx = d.column_index(x_col);
    const auto cy = d.column_index(y_col);
    std::vector<std::pair<double, double>> out;
    out.reserve(d.row_count());
    for (std::size_t r = 0; r < d.row_count(); ++r) out.emplace_back(d.at(r, cx), d.at(r, cy));
    return out;
}

}  // namespace

ExperimentResult run_filter_experiment(const Dataset& dataset, const std::string& x_col, const std::string& y_col,
                                       double width) {
    if (dataset.row_count() == 0) throw DataError(fmt::format("dataset '{}' has no rows", dataset.name()));
    ExperimentResult r;
    r.dataset = dataset.name();
    r.x_col = x_col;
    r.y_col = y_col;
    r.width = width;
    r.raw_rows = dataset.row_count();
    for (const auto& col : {x_col, y_col}) {
        r.observations.push_back(observe_attribute(dataset, col, width));
        r.deviations.push_back(deviation_matrix(r.observations.back()));
        r.filtered_rows.push_back(filter_2sigma(dataset, {col}, width).row_count());
    }
    const auto joint = filter_2sigma(dataset, {x_col, y_col}, width);
    r.joint_filtered_rows = joint.row_count();
    r.raw_points = points(dataset, x_col, y_col);
    r.filtered_points = points(joint, x_col, y_col);
    r.raw_line = regression_segment(dataset, x_col, y_col);
    r.filtered_line = regression_segment(joint, x_col, y_col);
    return r;
}

namespace {

void write_xy(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& xy) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    out << "x,y\n";
    for (const auto& [x, y] : xy) out << fmt::format("{},{}\n", x, y);
    if (!out) throw DataError(fmt::format("write failed for '{}'", path.string()));
}

std::vector<std::pair<double, double>> line_points(const std::optional<PlotLine>& line) {
    if (!line) return {};
    return {{line->x0, line->y0}, {line->x1, line->y1}};
}

}  // namespace

std::vector<std::filesystem::path> emit_plot_data(const ExperimentResult& result,
                                                  const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));
    const std::vector<std::filesystem::path> paths = {
        out_dir / fmt::format("{}_raw_points.csv", result.dataset),
        out_dir / fmt::format("{}_raw_line.csv", result.dataset),
        out_dir / fmt::format("{}_filtered_points.csv", result.dataset),
        out_dir / fmt::format("{}_filtered_line.csv", result.dataset),
    };
    write_xy(paths[0], result.raw_points);
    write_xy(paths[1], line_points(result.raw_line));
    write_xy(paths[2], result.filtered_points);
    write_xy(paths[3], line_points(result.filtered_line));
    return paths;
}

}  // namespace fedgate
