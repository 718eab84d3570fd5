#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedgate/dataset.hpp"
#include "fedgate/gkernel.hpp"
#include "fedgate/model.hpp"
#include "fedgate/rng.hpp"

namespace fedgate {

enum class Algorithm { fedavg, fedprox, gfedprox };
enum class StragglerPolicy { drop, partial };
enum class AggregationWeighting { uniform, by_samples };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);
std::string to_string(StragglerPolicy p);
StragglerPolicy parse_straggler_policy(const std::string& s);
std::string to_string(AggregationWeighting w);
AggregationWeighting parse_aggregation_weighting(const std::string& s);

/// FedAvg drops stragglers, the proximal methods keep their partial work.
StragglerPolicy default_straggler_policy(Algorithm a);

struct FederationConfig {
    Algorithm algorithm = Algorithm::fedprox;
    std::size_t n_devices = 1;
    std::size_t devices_per_round = 1;
    int rounds = 1;
    std::vector<double> sampling_probs;  // one per device, sums to 1
    LocalSolveConfig solve;              // solve.seed is ignored; per-client seeds derive from `seed`
    GateConfig gate;
    double straggler_fraction = 0.0;
    StragglerPolicy straggler_policy = StragglerPolicy::partial;
    AggregationWeighting aggregation_weighting = AggregationWeighting::uniform;
    std::uint64_t seed = 0;
    unsigned threads = 1;  // execution only, never changes results
};

std::vector<double> uniform_probs(std::size_t n);

/// Every violated constraint, empty when valid.
std::vector<std::string> validation_errors(const FederationConfig& cfg);
/// Throws ConfigError carrying every violated constraint.
void validate(const FederationConfig& cfg);

/// K distinct ids drawn without replacement, each draw proportional to the remaining probabilities.
std::vector<int> sample_devices(std::size_t n, std::size_t k, const std::vector<double>& probs, Rng& rng);

/// Local epochs per selected device. A device straggles with probability
/// `straggler_fraction` and then draws uniformly from {1, ..., E-1}; with E = 1
/// there is no smaller amount of work and every device gets 1.
std::map<int, int> assign_straggler_epochs(const std::vector<int>& selected, const FederationConfig& cfg, Rng& rng);

struct WeightedUpdate {
    WeightVector weights;
    std::size_t n_samples = 1;
};

/// Uniform mean, or the n_k-weighted mean. Throws DataError on an empty list.
WeightVector aggregate(const std::vector<WeightedUpdate>& updates, AggregationWeighting weighting);

struct ClientRoundEntry {
    int client_id = 0;
    int epochs = 0;
    bool straggler = false;
    bool dropped = false;  // straggler discarded under the drop policy
    double g_scale = 0.5;  // multiplier applied to mu in this solve
    double beta = 0.0;
    bool accepted = true;
    double g_value = 0.5;  // gate output, scales this client's next solve
    std::vector<std::size_t> offending_coordinates;
};

struct RoundReport {
    int round = 0;
    std::vector<int> selected;
    std::vector<int> accepted;
    std::vector<int> rejected;
    std::vector<int> dropped;
    std::vector<ClientRoundEntry> clients;
    WeightVector global_weights;  // w^{t+1}
    double global_loss = 0.0;     // sample-weighted loss over all devices
    double mean_beta = 0.0;
    bool empty_aggregation = false;
    bool gated = false;  // false in bootstrap rounds without statistics
    KernelTelemetry telemetry;
};

struct ClientSummary {
    int client_id = 0;
    std::size_t participations = 0;
    std::size_t rejections = 0;
    double n0 = 0.0;
    bool never_participated = true;
};

struct RunHistory {
    FederationConfig config;
    WeightVector initial_weights;
    std::vector<RoundReport> rounds;
    std::vector<ClientSummary> clients;  // indexed by client id
};

/// Invoked after each round, in order.
using RoundCallback = std::function<void(const RoundReport&)>;

/// Runs T rounds of the configured algorithm. Client ids must be a permutation
/// of 0..N-1; `sampling_probs[i]` belongs to `clients[i]`.
RunHistory run(const FederationConfig& config, const std::vector<ClientDataset>& clients, const WeightVector& w0,
               const RoundCallback& on_round = {});

/// Sample-weighted loss sum_k (n_k/n) F_k(w).
double global_loss(const WeightVector& w, const std::vector<ClientDataset>& clients);

}  // namespace fedgate
