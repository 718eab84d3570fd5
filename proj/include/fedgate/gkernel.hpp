#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedgate/model.hpp"

namespace fedgate {

/// Normal density. Throws NumericError unless std > 0.
double gaussian_pdf(double x, double mean, double std);

/// Per-coordinate location and scale of a set of client updates.
struct ServerStats {
    std::vector<double> mean;
    std::vector<double> std;  // population convention
    std::size_t n_observed = 0;
};

ServerStats update_server_stats(std::span<const WeightVector> updates);

enum class GateMode { gated, passthrough, disabled };

/// Which updates of a round feed the statistics used in the next round.
enum class StatsSource { accepted, all };

struct GateConfig {
    double width = 2.0;  // half-width of the acceptance window in standard deviations
    GateMode mode = GateMode::gated;
    StatsSource stats_source = StatsSource::accepted;
};

std::string to_string(GateMode m);
GateMode parse_gate_mode(const std::string& s);
std::string to_string(StatsSource s);
StatsSource parse_stats_source(const std::string& s);

struct GateDecision {
    bool accepted = true;
    double g_value = 0.5;
    std::vector<std::size_t> offending_coordinates;
};

/// The G function. In gated mode every coordinate must lie strictly inside
/// mean_j +- width*std_j; an accepted update gets g = mean_j pdf(w_j)/2, with
/// zero-scale coordinates contributing 1/2. Rejection gives g = 0. Other modes
/// accept with g = 1/2.
GateDecision gate(const WeightVector& update, const ServerStats& stats, const GateConfig& cfg);

enum class TailClass { leptokurtic, mesokurtic, platykurtic };

std::string to_string(TailClass c);

struct Kurtosis {
    double raw = 0.0;
    double excess = 0.0;
    TailClass tail_class = TailClass::mesokurtic;
};

/// Heavy tails above 3, light below, mesokurtic within 1e-9 of 3.
TailClass classify_kurtosis(double raw);

/// Bias-corrected sample kurtosis:
///   excess = n(n+1)/((n-1)(n-2)(n-3)) * sum(((x - mean)/s)^4) - 3(n-1)^2/((n-2)(n-3))
/// with s the (n-1) sample deviation, raw = excess + 3.
/// Throws DataError for n < 4 and NumericError for zero variance.
Kurtosis kurtosis(std::span<const double> samples);

struct KernelTelemetry {
    std::size_t total_seen = 0;
    std::size_t total_rejected = 0;
    double n0 = 0.0;
    bool kurtosis_available = false;
    double kurtosis_raw = 0.0;
    double kurtosis_excess = 0.0;
    TailClass tail_class = TailClass::mesokurtic;
    std::optional<double> kurtosis_n0_ratio;  // kurtosis_raw / (3 n0); reported, not asserted
};

KernelTelemetry record_decision(KernelTelemetry telemetry, const GateDecision& decision);

/// Fills the kurtosis fields from a scalar history of recent accepted updates.
/// Fewer than four samples or a constant history leaves them unavailable.
KernelTelemetry kernel_report(KernelTelemetry telemetry, std::span<const double> recent_updates);

}  // namespace fedgate
