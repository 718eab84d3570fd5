#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedgate/dataset.hpp"

namespace fedgate {

/// A dataset known by name. Pins are checked whenever the file is loaded
/// through the registry.
struct DatasetEntry {
    std::string name;
    std::string file_name;
    std::string x_col;
    std::string y_col;
    std::size_t row_count = 0;
    std::optional<std::uint64_t> checksum;  // over the x and y columns
    std::string source_url;
    std::string fetch_url;  // empty: manual download only
    std::string notes;
};

const std::vector<DatasetEntry>& dataset_registry();

/// Lookup by registry name or by file name. nullptr if unknown.
const DatasetEntry* find_dataset(const std::string& name);

/// $FEDGATE_DATA_DIR, then ./data, then the data directory of the source tree.
std::vector<std::filesystem::path> data_search_path();

/// First existing copy of the entry's file on the search path.
std::optional<std::filesystem::path> locate(const DatasetEntry& entry);

/// FNV-1a 64 over the IEEE-754 bit patterns (little-endian) of the named
/// columns, row-major.
std::uint64_t column_checksum(const Dataset& dataset, const std::vector<std::string>& columns);

struct DatasetFingerprint {
    std::string name;
    std::string path;
    std::size_t row_count = 0;
    std::vector<std::string> columns;
    std::uint64_t checksum = 0;
};

DatasetFingerprint fingerprint(const Dataset& dataset, const std::filesystem::path& path,
                               const std::vector<std::string>& columns);

/// Throws DataError when the loaded data does not match the entry's pins.
void verify(const DatasetEntry& entry, const DatasetFingerprint& fp);

struct ResolvedDataset {
    std::filesystem::path path;
    const DatasetEntry* entry = nullptr;  // set when the input matched the registry
};

/// `spec` is an existing file path or a registry name. Throws DataError with
/// the search path and download hint when nothing is found.
ResolvedDataset resolve_dataset(const std::string& spec);

/// Loads x and y; verifies registry pins when the file belongs to an entry.
struct LoadedDataset {
    Dataset data;
    DatasetFingerprint fingerprint;
};
LoadedDataset load_dataset(const ResolvedDataset& resolved, const std::string& x_col, const std::string& y_col);

/// Turns the first HTML table holding the wanted header cells into CSV text.
/// Throws DataError if no such table exists.
std::string html_table_to_csv(const std::string& html, const std::vector<std::string>& required_header);

/// Downloads the entry into `dest_dir` (libcurl) and verifies it. Returns the
/// written path. Throws DataError on network failure, a manual-only entry, or
/// a pin mismatch.
std::filesystem::path fetch_dataset(const DatasetEntry& entry, const std::filesystem::path& dest_dir);

std::string hex64(std::uint64_t v);

}  // namespace fedgate
