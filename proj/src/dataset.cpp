#include "fedgate/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "fedgate/error.hpp"
#include "fedgate/rng.hpp"

namespace fedgate {

Dataset::Dataset(std::string name, std::vector<std::string> columns)
    : name_(std::move(name)), columns_(std::move(columns)) {}

std::span<const double> Dataset::row(std::size_t i) const {
    return {values_.data() + i * columns_.size(), columns_.size()};
}

std::size_t Dataset::column_index(const std::string& column) const {
    auto it = std::find(columns_.begin(), columns_.end(), column);
    if (it == columns_.end()) {
        throw DataError(fmt::format("dataset '{}' has no column '{}'", name_, column));
    }
    return static_cast<std::size_t>(it - columns_.begin());
}

bool Dataset::has_column(const std::string& column) const {
    return std::find(columns_.begin(), columns_.end(), column) != columns_.end();
}

std::vector<double> Dataset::column(const std::string& column) const {
    const auto c = column_index(column);
    std::vector<double> out;
    out.reserve(row_count());
    for (std::size_t r = 0; r < row_count(); ++r) out.push_back(at(r, c));
    return out;
}

void Dataset::append_row(std::span<const double> values) {
    if (values.size() != columns_.size()) {
        throw DataError(fmt::format("row has {} values, dataset '{}' has {} columns", values.size(), name_,
                                    columns_.size()));
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw DataError(fmt::format("non-finite value in dataset '{}'", name_));
    }
    values_.insert(values_.end(), values.begin(), values.end());
}

Dataset Dataset::with_name(std::string name) const {
    Dataset copy = *this;
    copy.name_ = std::move(name);
    return copy;
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record. Quoted fields may contain commas and doubled quotes.
// Records never span lines here; embedded newlines are not part of the dialect.
std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            if (!trim(cur).empty()) {
                throw DataError(fmt::format("line {}: stray quote inside unquoted field", line_no));
            }
            cur.clear();
            in_quotes = true;
            was_quoted = true;
        } else if (ch == ',') {
            fields.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else if (was_quoted) {
            if (ch != ' ' && ch != '\t' && ch != '\r') {
                throw DataError(fmt::format("line {}: text after closing quote", line_no));
            }
        } else {
            cur.push_back(ch);
        }
    }
    if (in_quotes) throw DataError(fmt::format("line {}: unterminated quoted field", line_no));
    fields.push_back(was_quoted ? cur : trim(cur));
    return fields;
}

bool parse_real(const std::string& text, double& out) {
    std::string_view s = text;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos && trim(s) == s) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& selected_columns) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (!trim(line).empty()) {
            header = split_record(line, line_no);
            break;
        }
    }
    if (header.empty()) throw DataError(fmt::format("'{}' has no header row", path.string()));

    std::vector<std::size_t> source_index;
    for (const auto& col : selected_columns) {
        auto it = std::find(header.begin(), header.end(), col);
        if (it == header.end()) {
            throw DataError(fmt::format("'{}': header has no column '{}'", path.string(), col));
        }
        source_index.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    Dataset out(path.stem().string(), selected_columns);
    std::vector<double> values(selected_columns.size());
    std::size_t data_row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++data_row;
        const auto fields = split_record(line, line_no);
        for (std::size_t k = 0; k < source_index.size(); ++k) {
            const auto src = source_index[k];
            if (src >= fields.size() || fields[src].empty()) {
                throw DataError(fmt::format("'{}' line {} (data row {}): missing value for column '{}'",
                                            path.string(), line_no, data_row, selected_columns[k]));
            }
            if (!parse_real(fields[src], values[k])) {
                throw DataError(fmt::format("'{}' line {} (data row {}), column '{}': cannot parse '{}' as a number",
                                            path.string(), line_no, data_row, selected_columns[k], fields[src]));
            }
        }
        out.append_row(values);
    }
    return out;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    const auto& cols = dataset.columns();
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << quote_if_needed(cols[c]);
    out << '\n';
    for (std::size_t r = 0; r < dataset.row_count(); ++r) {
        const auto row = dataset.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << fmt::format("{}", row[c]);
        out << '\n';
    }
    if (!out) throw DataError(fmt::format("write failed for '{}'", path.string()));
}

ColumnStats column_stats(std::span<const double> values) {
    if (values.empty()) throw DataError("column statistics of an empty column");
    ColumnStats s;
    s.n = values.size();
    const double n = static_cast<double>(s.n);
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / n);
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    s.min = *lo;
    s.max = *hi;
    // Rounding can push the mean one ulp past a constant column's value.
    s.mean = std::clamp(s.mean, s.min, s.max);
    if (s.min == s.max) s.std = 0.0;
    return s;
}

ColumnStats column_stats(const Dataset& dataset, const std::string& column) {
    const auto values = dataset.column(column);
    if (values.empty()) {
        throw DataError(fmt::format("column '{}' of dataset '{}' is empty", column, dataset.name()));
    }
    return column_stats(values);
}

double zscore(double x, const ColumnStats& stats) {
    if (!(stats.std > 0.0)) throw NumericError("z-score with zero standard deviation");
    return (x - stats.mean) / stats.std;
}

bool within_window(double x, const ColumnStats& stats, double width) {
    if (std::isinf(width) && width > 0) return true;
    if (stats.std == 0.0) return x == stats.mean;
    const double half = width * stats.std;
    return stats.mean - half < x && x < stats.mean + half;
}

Dataset filter_2sigma(const Dataset& dataset, const std::vector<std::string>& columns, double width) {
    if (!(width > 0.0)) throw ConfigError(fmt::format("filter width must be positive, got {}", width));
    std::vector<std::size_t> idx;
    std::vector<ColumnStats> stats;
    for (const auto& c : columns) {
        idx.push_back(dataset.column_index(c));
        if (dataset.row_count() > 0) stats.push_back(column_stats(dataset, c));
    }
    Dataset out(dataset.name(), dataset.columns());
    for (std::size_t r = 0; r < dataset.row_count(); ++r) {
        bool keep = true;
        for (std::size_t k = 0; k < idx.size() && keep; ++k) {
            keep = within_window(dataset.at(r, idx[k]), stats[k], width);
        }
        if (keep) out.append_row(dataset.row(r));
    }
    return out;
}

std::map<std::string, Dataset> filter_2sigma_per_column(const Dataset& dataset,
                                                        const std::vector<std::string>& columns,
                                                        double width) {
    std::map<std::string, Dataset> out;
    for (const auto& c : columns) out.emplace(c, filter_2sigma(dataset, {c}, width));
    return out;
}

std::string to_string(PartitionStrategy s) {
    switch (s) {
        case PartitionStrategy::iid: return "iid";
        case PartitionStrategy::quantity_skew: return "quantity_skew";
        case PartitionStrategy::feature_sort_shard: return "feature_sort_shard";
    }
    return "?";
}

PartitionStrategy parse_partition_strategy(const std::string& s) {
    if (s == "iid") return PartitionStrategy::iid;
    if (s == "quantity_skew") return PartitionStrategy::quantity_skew;
    if (s == "feature_sort_shard") return PartitionStrategy::feature_sort_shard;
    throw ConfigError(fmt::format("unknown partition strategy '{}'", s));
}

std::vector<std::size_t> quantity_skew_sizes(std::size_t rows, std::size_t n_clients, double skew,
                                             std::uint64_t seed) {
    if (n_clients == 0) throw ConfigError("partition needs at least one client");
    if (n_clients > rows) {
        throw ConfigError(fmt::format("cannot split {} rows across {} clients", rows, n_clients));
    }
    if (!(skew >= 0.0 && skew <= 1.0)) throw ConfigError(fmt::format("skew must lie in [0,1], got {}", skew));

    Rng rng(derive_seed(seed, {0x5157}));
    std::vector<double> weight(n_clients);
    for (auto& w : weight) w = skew == 0.0 ? 1.0 : std::pow(rng.uniform_open0(), -2.0 * skew);
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);

    // One guaranteed row each, the rest by largest remainder.
    const std::size_t spare = rows - n_clients;
    std::vector<std::size_t> sizes(n_clients, 1);
    std::vector<std::pair<double, std::size_t>> remainder;
    std::size_t given = 0;
    for (std::size_t i = 0; i < n_clients; ++i) {
        const double share = static_cast<double>(spare) * weight[i] / total;
        const auto whole = static_cast<std::size_t>(std::floor(share));
        sizes[i] += whole;
        given += whole;
        remainder.emplace_back(share - static_cast<double>(whole), i);
    }
    std::stable_sort(remainder.begin(), remainder.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; given < spare; ++k, ++given) ++sizes[remainder[k % n_clients].second];
    return sizes;
}

std::vector<ClientDataset> partition(const Dataset& dataset, const PartitionSpec& spec,
                                     const std::string& feature_col, const std::string& target_col) {
    const std::size_t rows = dataset.row_count();
    if (spec.n_clients == 0) throw ConfigError("partition needs at least one client");
    if (spec.n_clients > rows) {
        throw ConfigError(fmt::format("cannot split {} rows across {} clients", rows, spec.n_clients));
    }
    const auto fx = dataset.column_index(feature_col);
    const auto fy = dataset.column_index(target_col);

    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::vector<std::size_t>> assigned(spec.n_clients);

    switch (spec.strategy) {
        case PartitionStrategy::iid: {
            Rng rng(derive_seed(spec.seed, {0x11d}));
            rng.shuffle(std::span(order));
            for (std::size_t i = 0; i < rows; ++i) assigned[i % spec.n_clients].push_back(order[i]);
            break;
        }
        case PartitionStrategy::quantity_skew: {
            Rng rng(derive_seed(spec.seed, {0x11d}));
            rng.shuffle(std::span(order));
            const auto sizes = quantity_skew_sizes(rows, spec.n_clients, spec.skew, spec.seed);
            std::size_t pos = 0;
            for (std::size_t c = 0; c < spec.n_clients; ++c) {
                assigned[c].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                   order.begin() + static_cast<std::ptrdiff_t>(pos + sizes[c]));
                pos += sizes[c];
            }
            break;
        }
        case PartitionStrategy::feature_sort_shard: {
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return dataset.at(a, fx) < dataset.at(b, fx); });
            const std::size_t base = rows / spec.n_clients;
            const std::size_t extra = rows % spec.n_clients;
            std::size_t pos = 0;
            for (std::size_t c = 0; c < spec.n_clients; ++c) {
                const std::size_t len = base + (c < extra ? 1 : 0);
                assigned[c].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                   order.begin() + static_cast<std::ptrdiff_t>(pos + len));
                pos += len;
            }
            break;
        }
    }

    std::vector<ClientDataset> clients(spec.n_clients);
    for (std::size_t c = 0; c < spec.n_clients; ++c) {
        auto& cd = clients[c];
        cd.client_id = static_cast<int>(c);
        cd.dim = 1;
        for (auto r : assigned[c]) {
            cd.features.push_back(dataset.at(r, fx));
            cd.targets.push_back(dataset.at(r, fy));
        }
    }
    return clients;
}

}  // namespace fedgate
