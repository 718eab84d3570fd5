#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgate/analysis.hpp"
#include "fedgate/config.hpp"
#include "fedgate/federation.hpp"
#include "fedgate/registry.hpp"

namespace fedgate {

inline constexpr const char* kToolName = "fedgate";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

/// Enough to re-run a result. Wall-clock times and argv live in the run_info
/// sidecar so that re-runs stay byte-identical.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    nlohmann::ordered_json config;
    std::vector<DatasetFingerprint> datasets;
};

nlohmann::ordered_json to_json(const RunManifest& manifest);
nlohmann::ordered_json to_json(const DatasetFingerprint& fp);

/// Client data and reference point of a simulation, built from the problem section.
struct PreparedProblem {
    std::vector<ClientDataset> clients;
    std::optional<WeightVector> reference_optimum;
    std::vector<DatasetFingerprint> datasets;
};

PreparedProblem prepare_problem(const SimulationConfig& cfg);

struct SimulationResult {
    RunManifest manifest;
    RunHistory history;
    std::optional<WeightVector> reference_optimum;
};

SimulationResult run_simulation(const SimulationConfig& cfg, const RoundCallback& on_round = {});

nlohmann::ordered_json round_json(const RoundReport& round);
nlohmann::ordered_json summary_json(const SimulationResult& result);
nlohmann::ordered_json analysis_json(const ExperimentResult& result, const RunManifest& manifest);
nlohmann::ordered_json run_info_json(const std::vector<std::string>& argv, const std::string& started,
                                     const std::string& finished);

/// Pretty JSON with a trailing newline.
std::string dump(const nlohmann::ordered_json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// OBSERVATION / DEVIATIONS / RESULT tables.
std::string format_analysis_tables(const ExperimentResult& result);

/// Final numbers pulled out of a summary document for side-by-side display.
struct SummaryDigest {
    std::string label;
    std::string algorithm;
    std::size_t weight_size = 0;
    int rounds = 0;
    int empty_rounds = 0;
    double final_loss = 0.0;
    std::optional<double> final_distance;
    double mean_n0 = 0.0;
    std::size_t total_rejected = 0;
};

/// Throws DataError when the document is not a simulation summary.
SummaryDigest digest_summary(const nlohmann::json& summary, const std::string& label);

/// Throws DataError when the digests describe different problem dimensions.
std::string format_comparison(const std::vector<SummaryDigest>& digests);

}  // namespace fedgate
