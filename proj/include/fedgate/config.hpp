#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgate/dataset.hpp"
#include "fedgate/federation.hpp"
#include "fedgate/synthetic.hpp"

namespace fedgate {

enum class SamplingKind { uniform, by_samples, explicit_probs };

struct SamplingSpec {
    SamplingKind kind = SamplingKind::uniform;
    std::vector<double> probs;  // explicit_probs only

    friend bool operator==(const SamplingSpec&, const SamplingSpec&) = default;
};

/// Client data for a simulation, either a generated fleet or a partitioned CSV.
struct CsvProblem {
    std::string dataset;  // path or registry name
    std::string x_col;
    std::string y_col;
    PartitionStrategy strategy = PartitionStrategy::iid;
    double skew = 0.0;
    std::uint64_t partition_seed = 0;

    friend bool operator==(const CsvProblem&, const CsvProblem&) = default;
};

struct ProblemConfig {
    std::optional<SyntheticProblem> synthetic;
    std::optional<CsvProblem> csv;

    friend bool operator==(const ProblemConfig&, const ProblemConfig&) = default;
};

/// Everything `simulate` needs; the config file maps onto this one-to-one.
struct SimulationConfig {
    Algorithm algorithm = Algorithm::gfedprox;
    std::size_t n_devices = 20;
    std::size_t devices_per_round = 10;
    int rounds = 50;
    SamplingSpec sampling;
    LocalSolveConfig solve{20, 0.1, 32, 0.05, 0};
    GateConfig gate;
    double straggler_fraction = 0.0;
    std::optional<StragglerPolicy> straggler_policy;  // unset: the algorithm's default
    AggregationWeighting aggregation_weighting = AggregationWeighting::uniform;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::vector<double> initial_weights;  // empty: zeros
    ProblemConfig problem;

    friend bool operator==(const SimulationConfig& a, const SimulationConfig& b);
};

nlohmann::ordered_json to_json(const SimulationConfig& cfg);

/// Strict parse: unknown keys, wrong types and constraint violations are all
/// collected and reported together in one ConfigError.
SimulationConfig simulation_config_from_json(const nlohmann::json& doc);

/// Reads a config file. A simulation summary is accepted too; its embedded
/// manifest config is used, which makes every summary re-runnable.
SimulationConfig load_simulation_config(const std::filesystem::path& path);

/// Resolves sampling and straggler defaults into a runnable FederationConfig.
FederationConfig to_federation_config(const SimulationConfig& cfg, const std::vector<ClientDataset>& clients);

/// The config violations not already caught by parsing (e.g. rounds >= 1).
std::vector<std::string> semantic_errors(const SimulationConfig& cfg);

}  // namespace fedgate
