#include "fedgate/gkernel.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "fedgate/error.hpp"

namespace fedgate {

double gaussian_pdf(double x, double mean, double std) {
    if (!(std > 0.0) || !std::isfinite(std)) {
        throw NumericError(fmt::format("gaussian_pdf needs a positive finite std (got {})", std));
    }
    const double z = (x - mean) / std;
    return std::exp(-0.5 * z * z) / (std * std::sqrt(2.0 * std::numbers::pi));
}

ServerStats update_server_stats(std::span<const WeightVector> updates) {
    if (updates.empty()) throw DataError("server statistics need at least one update");
    const std::size_t d = updates.front().size();
    ServerStats s;
    s.n_observed = updates.size();
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    for (const auto& u : updates) {
        if (u.size() != d) {
            throw ConfigError(fmt::format("update of size {} among updates of size {}", u.size(), d));
        }
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += u[j];
    }
    const double n = static_cast<double>(updates.size());
    for (auto& m : s.mean) m /= n;
    for (std::size_t j = 0; j < d; ++j) {
        double ss = 0.0;
        bool constant = true;
        for (const auto& u : updates) {
            ss += (u[j] - s.mean[j]) * (u[j] - s.mean[j]);
            constant = constant && u[j] == updates.front()[j];
        }
        // A constant coordinate must have zero scale and its mean exactly equal to the value.
        if (constant) {
            s.mean[j] = updates.front()[j];
            s.std[j] = 0.0;
        } else {
            s.std[j] = std::sqrt(ss / n);
        }
    }
    return s;
}

std::string to_string(GateMode m) {
    switch (m) {
        case GateMode::gated: return "gated";
        case GateMode::passthrough: return "passthrough";
        case GateMode::disabled: return "disabled";
    }
    return "?";
}

GateMode parse_gate_mode(const std::string& s) {
    if (s == "gated") return GateMode::gated;
    if (s == "passthrough") return GateMode::passthrough;
    if (s == "disabled") return GateMode::disabled;
    throw ConfigError(fmt::format("unknown gate mode '{}'", s));
}

std::string to_string(StatsSource s) { return s == StatsSource::accepted ? "accepted" : "all"; }

StatsSource parse_stats_source(const std::string& s) {
    if (s == "accepted") return StatsSource::accepted;
    if (s == "all") return StatsSource::all;
    throw ConfigError(fmt::format("unknown stats source '{}'", s));
}

GateDecision gate(const WeightVector& update, const ServerStats& stats, const GateConfig& cfg) {
    if (cfg.mode != GateMode::gated) return {true, 0.5, {}};
    if (update.size() != stats.mean.size() || update.size() != stats.std.size()) {
        throw ConfigError(
            fmt::format("gate: update has {} coordinates, statistics have {}", update.size(), stats.mean.size()));
    }
    if (!(cfg.width > 0.0)) throw ConfigError(fmt::format("gate width must be positive (got {})", cfg.width));

    GateDecision d;
    double g_sum = 0.0;
    for (std::size_t j = 0; j < update.size(); ++j) {
        const double mu = stats.mean[j];
        const double sigma = stats.std[j];
        const double w = update[j];
        bool pass;
        double contribution;
        if (sigma == 0.0) {
            pass = w == mu;
            contribution = 0.5;
        } else {
            const double half = cfg.width * sigma;
            pass = std::isinf(cfg.width) || (mu - half < w && w < mu + half);
            contribution = pass ? gaussian_pdf(w, mu, sigma) / 2.0 : 0.0;
        }
        if (!pass) d.offending_coordinates.push_back(j);
        g_sum += contribution;
    }
    d.accepted = d.offending_coordinates.empty();
    d.g_value = d.accepted ? g_sum / static_cast<double>(update.size()) : 0.0;
    return d;
}

std::string to_string(TailClass c) {
    switch (c) {
        case TailClass::leptokurtic: return "Leptokurtic";
        case TailClass::mesokurtic: return "Mesokurtic";
        case TailClass::platykurtic: return "Platykurtic";
    }
    return "?";
}

TailClass classify_kurtosis(double raw) {
    constexpr double tol = 1e-9;
    if (raw > 3.0 + tol) return TailClass::leptokurtic;
    if (raw < 3.0 - tol) return TailClass::platykurtic;
    return TailClass::mesokurtic;
}

Kurtosis kurtosis(std::span<const double> samples) {
    const std::size_t count = samples.size();
    if (count < 4) throw DataError(fmt::format("kurtosis needs at least 4 samples (got {})", count));
    const double n = static_cast<double>(count);
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= n;
    double m2 = 0.0;
    double m4 = 0.0;
    for (double x : samples) {
        const double d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    if (m2 == 0.0) throw NumericError("kurtosis of a constant sample");
    const double s2 = m2 / (n - 1.0);
    const double sum_z4 = m4 / (s2 * s2);
    Kurtosis k;
    k.excess = n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * sum_z4 -
               3.0 * (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
    k.raw = k.excess + 3.0;
    k.tail_class = classify_kurtosis(k.raw);
    return k;
}

KernelTelemetry record_decision(KernelTelemetry telemetry, const GateDecision& decision) {
    ++telemetry.total_seen;
    if (!decision.accepted) ++telemetry.total_rejected;
    telemetry.n0 = static_cast<double>(telemetry.total_rejected) / static_cast<double>(telemetry.total_seen);
    return telemetry;
}

KernelTelemetry kernel_report(KernelTelemetry telemetry, std::span<const double> recent_updates) {
    telemetry.kurtosis_available = false;
    telemetry.kurtosis_n0_ratio.reset();
    try {
        const auto k = kurtosis(recent_updates);
        telemetry.kurtosis_available = true;
        telemetry.kurtosis_raw = k.raw;
        telemetry.kurtosis_excess = k.excess;
        telemetry.tail_class = k.tail_class;
        if (telemetry.n0 > 0.0) telemetry.kurtosis_n0_ratio = k.raw / (3.0 * telemetry.n0);
    } catch (const DataError&) {
    } catch (const NumericError&) {
    }
    return telemetry;
}

}  // namespace fedgate
