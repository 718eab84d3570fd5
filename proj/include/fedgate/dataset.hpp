#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fedgate {

/// A numeric table: named columns, row-major storage, every cell finite.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::string name, std::vector<std::string> columns);

    const std::string& name() const noexcept { return name_; }
    const std::vector<std::string>& columns() const noexcept { return columns_; }
    std::size_t column_count() const noexcept { return columns_.size(); }
    std::size_t row_count() const noexcept {
        return columns_.empty() ? 0 : values_.size() / columns_.size();
    }

    std::span<const double> row(std::size_t i) const;
    double at(std::size_t row, std::size_t col) const { return values_[row * columns_.size() + col]; }

    /// Throws DataError for an unknown column.
    std::size_t column_index(const std::string& column) const;
    bool has_column(const std::string& column) const;
    std::vector<double> column(const std::string& column) const;

    /// Throws DataError on arity mismatch or a non-finite value.
    void append_row(std::span<const double> values);

    Dataset with_name(std::string name) const;

private:
    std::string name_;
    std::vector<std::string> columns_;
    std::vector<double> values_;
};

/// Location/scale summary of one column. `std` uses the population convention (divide by n).
struct ColumnStats {
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
};

/// Loads the selected columns of a comma-separated file with a header row.
/// Quoted fields and surrounding whitespace are accepted. Rows keep file order.
Dataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& selected_columns);

/// Writes `dataset` as CSV with the same header order.
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

ColumnStats column_stats(const Dataset& dataset, const std::string& column);
ColumnStats column_stats(std::span<const double> values);

/// (x - mean) / std. Throws NumericError when std == 0.
double zscore(double x, const ColumnStats& stats);

/// True iff mean - width*std < x < mean + width*std. A zero-scale column admits only its mean.
bool within_window(double x, const ColumnStats& stats, double width);

inline constexpr double kNoFilter = std::numeric_limits<double>::infinity();

/// Keeps rows lying strictly inside the width-sigma window of EVERY named column.
/// Window statistics come from the unfiltered input.
Dataset filter_2sigma(const Dataset& dataset, const std::vector<std::string>& columns, double width = 2.0);

/// One independently filtered dataset per named column.
std::map<std::string, Dataset> filter_2sigma_per_column(const Dataset& dataset,
                                                        const std::vector<std::string>& columns,
                                                        double width = 2.0);

/// Local data of one simulated device.
struct ClientDataset {
    int client_id = 0;
    std::size_t dim = 0;           // features per sample
    std::vector<double> features;  // n_k x dim, row-major
    std::vector<double> targets;   // n_k

    std::size_t n_k() const noexcept { return targets.size(); }
    std::span<const double> x(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

enum class PartitionStrategy { iid, quantity_skew, feature_sort_shard };

struct PartitionSpec {
    std::size_t n_clients = 1;
    PartitionStrategy strategy = PartitionStrategy::iid;
    double skew = 0.0;  // quantity_skew only, in [0, 1]
    std::uint64_t seed = 0;
};

std::string to_string(PartitionStrategy s);
PartitionStrategy parse_partition_strategy(const std::string& s);

/// Client sizes for quantity_skew: power-law weights u^(-2*skew), u ~ U(0,1].
/// Every client gets at least one row; sizes sum to `rows`.
std::vector<std::size_t> quantity_skew_sizes(std::size_t rows, std::size_t n_clients, double skew,
                                             std::uint64_t seed);

std::vector<ClientDataset> partition(const Dataset& dataset, const PartitionSpec& spec,
                                     const std::string& feature_col, const std::string& target_col);

}  // namespace fedgate
