#include "fedgate/federation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <numeric>

#include <fmt/format.h>

#include "fedgate/error.hpp"

namespace fedgate {

namespace {

enum StreamTag : std::uint64_t { kSampling = 1, kStragglers = 2, kSolve = 3 };

// Scalar projection of accepted updates kept for the kurtosis diagnostic.
constexpr std::size_t kKurtosisHistory = 512;

}  // namespace

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::fedprox: return "fedprox";
        case Algorithm::gfedprox: return "gfedprox";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "fedavg") return Algorithm::fedavg;
    if (s == "fedprox") return Algorithm::fedprox;
    if (s == "gfedprox") return Algorithm::gfedprox;
    throw ConfigError(fmt::format("unknown algorithm '{}' (expected fedavg, fedprox or gfedprox)", s));
}

std::string to_string(StragglerPolicy p) { return p == StragglerPolicy::drop ? "drop" : "partial"; }

StragglerPolicy parse_straggler_policy(const std::string& s) {
    if (s == "drop") return StragglerPolicy::drop;
    if (s == "partial") return StragglerPolicy::partial;
    throw ConfigError(fmt::format("unknown straggler policy '{}'", s));
}

std::string to_string(AggregationWeighting w) { return w == AggregationWeighting::uniform ? "uniform" : "by_samples"; }

AggregationWeighting parse_aggregation_weighting(const std::string& s) {
    if (s == "uniform") return AggregationWeighting::uniform;
    if (s == "by_samples") return AggregationWeighting::by_samples;
    throw ConfigError(fmt::format("unknown aggregation weighting '{}'", s));
}

StragglerPolicy default_straggler_policy(Algorithm a) {
    return a == Algorithm::fedavg ? StragglerPolicy::drop : StragglerPolicy::partial;
}

std::vector<double> uniform_probs(std::size_t n) {
    return std::vector<double>(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
}

std::vector<std::string> validation_errors(const FederationConfig& cfg) {
    std::vector<std::string> errs;
    if (cfg.n_devices < 1) errs.push_back("n_devices must be >= 1");
    if (cfg.devices_per_round < 1) errs.push_back("devices_per_round must be >= 1");
    if (cfg.devices_per_round > cfg.n_devices) {
        errs.push_back(fmt::format("devices_per_round ({}) exceeds n_devices ({})", cfg.devices_per_round,
                                   cfg.n_devices));
    }
    if (cfg.rounds < 1) errs.push_back(fmt::format("rounds must be >= 1 (got {})", cfg.rounds));
    if (cfg.sampling_probs.size() != cfg.n_devices) {
        errs.push_back(fmt::format("sampling_probs has {} entries, expected n_devices = {}", cfg.sampling_probs.size(),
                                   cfg.n_devices));
    } else {
        double total = 0.0;
        std::size_t positive = 0;
        bool negative = false;
        for (double p : cfg.sampling_probs) {
            if (!(p >= 0.0) || !std::isfinite(p)) negative = true;
            total += p;
            if (p > 0.0) ++positive;
        }
        if (negative) errs.push_back("sampling_probs entries must be finite and >= 0");
        if (std::abs(total - 1.0) > 1e-9) errs.push_back(fmt::format("sampling_probs must sum to 1 (sum = {})", total));
        if (positive < cfg.devices_per_round) {
            errs.push_back(fmt::format("only {} devices have positive probability, {} needed per round", positive,
                                       cfg.devices_per_round));
        }
    }
    if (cfg.solve.epochs < 1) errs.push_back(fmt::format("solve.epochs must be >= 1 (got {})", cfg.solve.epochs));
    if (!(cfg.solve.learning_rate > 0.0) || !std::isfinite(cfg.solve.learning_rate)) {
        errs.push_back(fmt::format("solve.learning_rate must be > 0 (got {})", cfg.solve.learning_rate));
    }
    if (cfg.solve.batch_size < 1) errs.push_back("solve.batch_size must be >= 1");
    if (!(cfg.solve.mu >= 0.0) || !std::isfinite(cfg.solve.mu)) {
        errs.push_back(fmt::format("solve.mu must be >= 0 (got {})", cfg.solve.mu));
    }
    if (!(cfg.gate.width > 0.0)) errs.push_back(fmt::format("gate.width must be > 0 (got {})", cfg.gate.width));
    if (!(cfg.straggler_fraction >= 0.0 && cfg.straggler_fraction <= 1.0)) {
        errs.push_back(fmt::format("straggler_fraction must lie in [0,1] (got {})", cfg.straggler_fraction));
    }
    if (cfg.threads < 1) errs.push_back("threads must be >= 1");
    return errs;
}

void validate(const FederationConfig& cfg) {
    const auto errs = validation_errors(cfg);
    if (!errs.empty()) throw ConfigError(fmt::format("invalid federation config: {}", fmt::join(errs, "; ")));
}

std::vector<int> sample_devices(std::size_t n, std::size_t k, const std::vector<double>& probs, Rng& rng) {
    if (probs.size() != n) throw ConfigError(fmt::format("{} probabilities for {} devices", probs.size(), n));
    std::vector<double> remaining = probs;
    const auto positive = static_cast<std::size_t>(
        std::count_if(remaining.begin(), remaining.end(), [](double p) { return p > 0.0; }));
    if (k > positive) {
        throw ConfigError(fmt::format("cannot select {} devices, only {} have positive probability", k, positive));
    }
    std::vector<int> chosen;
    chosen.reserve(k);
    for (std::size_t draw = 0; draw < k; ++draw) {
        double total = 0.0;
        for (double p : remaining) total += p;
        const double u = rng.uniform() * total;
        double acc = 0.0;
        std::size_t pick = n;
        std::size_t last_positive = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (remaining[i] <= 0.0) continue;
            last_positive = i;
            acc += remaining[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        if (pick == n) pick = last_positive;  // u landed past the rounded cumulative sum
        chosen.push_back(static_cast<int>(pick));
        remaining[pick] = 0.0;
    }
    return chosen;
}

std::map<int, int> assign_straggler_epochs(const std::vector<int>& selected, const FederationConfig& cfg, Rng& rng) {
    const int full = cfg.solve.epochs;
    std::map<int, int> epochs;
    for (int id : selected) {
        const bool straggler = rng.uniform() < cfg.straggler_fraction;
        int e = full;
        if (straggler && full > 1) e = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(full - 1)));
        epochs[id] = e;
    }
    return epochs;
}

WeightVector aggregate(const std::vector<WeightedUpdate>& updates, AggregationWeighting weighting) {
    if (updates.empty()) throw DataError("aggregate: no updates");
    const std::size_t d = updates.front().weights.size();
    std::vector<double> sum(d, 0.0);
    double total = 0.0;
    for (const auto& u : updates) {
        if (u.weights.size() != d) throw ConfigError("aggregate: updates have different dimensions");
        const double weight = weighting == AggregationWeighting::uniform ? 1.0 : static_cast<double>(u.n_samples);
        for (std::size_t j = 0; j < d; ++j) sum[j] += weight * u.weights[j];
        total += weight;
    }
    if (!(total > 0.0)) throw DataError("aggregate: total weight is zero");
    for (auto& s : sum) s /= total;
    return WeightVector::from_flat(std::move(sum));
}

double global_loss(const WeightVector& w, const std::vector<ClientDataset>& clients) {
    double weighted = 0.0;
    double n = 0.0;
    for (const auto& c : clients) {
        weighted += static_cast<double>(c.n_k()) * local_loss(w, c);
        n += static_cast<double>(c.n_k());
    }
    return n > 0.0 ? weighted / n : 0.0;
}

namespace {

struct SolveJob {
    int client_id;
    int epochs;
    double g_scale;
};

struct SolveResult {
    WeightVector weights;
    double beta = 0.0;
};

SolveResult solve_one(const FederationConfig& cfg, const ClientDataset& data, const WeightVector& start,
                      const SolveJob& job, int round) {
    LocalSolveConfig local = cfg.solve;
    local.epochs = job.epochs;
    local.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(job.client_id),
                                        kSolve});
    SolveResult r;
    try {
        if (cfg.algorithm == Algorithm::fedavg) {
            r.weights = sgd_local(start, data, local);
            r.beta = measure_inexactness(r.weights, start, data, 0.0, 0.0).beta;
        } else {
            r.weights = prox_local(start, data, local, job.g_scale);
            r.beta = measure_inexactness(r.weights, start, data, local.mu, job.g_scale).beta;
        }
    } catch (const DivergenceError& e) {
        throw DivergenceError(fmt::format("round {}, client {}: {}", round, job.client_id, e.what()), e.epoch());
    }
    return r;
}

std::vector<SolveResult> solve_all(const FederationConfig& cfg, const std::vector<const ClientDataset*>& by_id,
                                   const WeightVector& start, const std::vector<SolveJob>& jobs, int round) {
    std::vector<SolveResult> results(jobs.size());
    if (cfg.threads <= 1 || jobs.size() <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            results[i] = solve_one(cfg, *by_id[static_cast<std::size_t>(jobs[i].client_id)], start, jobs[i], round);
        }
        return results;
    }
    // Results land by job index, so scheduling cannot change the outcome.
    const std::size_t workers = std::min<std::size_t>(cfg.threads, jobs.size());
    std::vector<std::future<void>> pending;
    for (std::size_t w = 0; w < workers; ++w) {
        pending.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < jobs.size(); i += workers) {
                results[i] =
                    solve_one(cfg, *by_id[static_cast<std::size_t>(jobs[i].client_id)], start, jobs[i], round);
            }
        }));
    }
    for (auto& f : pending) f.get();
    return results;
}

}  // namespace

RunHistory run(const FederationConfig& config, const std::vector<ClientDataset>& clients, const WeightVector& w0,
               const RoundCallback& on_round) {
    validate(config);
    const std::size_t n = config.n_devices;
    if (clients.size() != n) {
        throw ConfigError(fmt::format("config expects {} devices, got {} client datasets", n, clients.size()));
    }
    if (!w0.all_finite()) throw ConfigError("initial weights must be finite");

    // Index everything by client id so the order of `clients` is irrelevant.
    std::vector<const ClientDataset*> by_id(n, nullptr);
    std::vector<double> probs_by_id(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int id = clients[i].client_id;
        if (id < 0 || static_cast<std::size_t>(id) >= n || by_id[static_cast<std::size_t>(id)] != nullptr) {
            throw ConfigError(fmt::format("client ids must be a permutation of 0..{}; bad id {}", n - 1, id));
        }
        if (clients[i].dim != w0.dim()) {
            throw ConfigError(fmt::format("client {} has {} features, model has {}", id, clients[i].dim, w0.dim()));
        }
        if (clients[i].n_k() == 0) throw DataError(fmt::format("client {} has no samples", id));
        by_id[static_cast<std::size_t>(id)] = &clients[i];
        probs_by_id[static_cast<std::size_t>(id)] = config.sampling_probs[i];
    }

    RunHistory history;
    history.config = config;
    history.initial_weights = w0;
    history.clients.resize(n);
    for (std::size_t id = 0; id < n; ++id) history.clients[id].client_id = static_cast<int>(id);

    const bool gfed = config.algorithm == Algorithm::gfedprox;
    const bool records_stats = gfed && config.gate.mode != GateMode::disabled;
    WeightVector w = w0;
    std::optional<ServerStats> stats;
    std::vector<double> next_g(n, 0.5);
    KernelTelemetry telemetry;
    std::deque<double> accepted_history;

    for (int t = 0; t < config.rounds; ++t) {
        RoundReport report;
        report.round = t;

        Rng sampling_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(t), kSampling}));
        report.selected = sample_devices(n, config.devices_per_round, probs_by_id, sampling_rng);
        Rng straggler_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(t), kStragglers}));
        const auto epochs = assign_straggler_epochs(report.selected, config, straggler_rng);

        std::vector<SolveJob> jobs;
        for (int id : report.selected) {
            ClientRoundEntry entry;
            entry.client_id = id;
            entry.epochs = epochs.at(id);
            entry.straggler = entry.epochs < config.solve.epochs;
            entry.dropped = entry.straggler && config.straggler_policy == StragglerPolicy::drop;
            entry.g_scale = gfed ? next_g[static_cast<std::size_t>(id)] : 0.5;
            if (entry.dropped) {
                report.dropped.push_back(id);
            } else {
                jobs.push_back({id, entry.epochs, entry.g_scale});
            }
            report.clients.push_back(entry);
        }

        const auto results = solve_all(config, by_id, w, jobs, t);

        report.gated = gfed && config.gate.mode == GateMode::gated && stats.has_value();
        std::vector<WeightedUpdate> to_aggregate;
        std::vector<WeightVector> stats_source;
        std::vector<WeightVector> all_updates;
        double beta_sum = 0.0;
        std::size_t job_index = 0;
        for (auto& entry : report.clients) {
            if (entry.dropped) continue;
            const auto& result = results[job_index++];
            const auto id = static_cast<std::size_t>(entry.client_id);
            entry.beta = result.beta;
            beta_sum += result.beta;

            GateDecision decision;  // bootstrap and non-gated algorithms: accept, g = 1/2
            if (report.gated) decision = gate(result.weights, *stats, config.gate);
            entry.accepted = decision.accepted;
            entry.g_value = decision.g_value;
            entry.offending_coordinates = decision.offending_coordinates;

            auto& summary = history.clients[id];
            ++summary.participations;
            summary.never_participated = false;
            if (!decision.accepted) ++summary.rejections;
            summary.n0 = static_cast<double>(summary.rejections) / static_cast<double>(summary.participations);

            if (records_stats) telemetry = record_decision(telemetry, decision);
            if (gfed) next_g[id] = decision.g_value;

            if (decision.accepted) {
                report.accepted.push_back(entry.client_id);
                to_aggregate.push_back({result.weights, by_id[id]->n_k()});
                accepted_history.push_back(result.weights[0]);
                if (accepted_history.size() > kKurtosisHistory) accepted_history.pop_front();
                if (config.gate.stats_source == StatsSource::accepted) stats_source.push_back(result.weights);
            } else {
                report.rejected.push_back(entry.client_id);
            }
                all_updates.push_back(result.weights);
        }

        if (to_aggregate.empty()) {
            report.empty_aggregation = true;
        } else {
            w = aggregate(to_aggregate, config.aggregation_weighting);
        }
        if (!w.all_finite()) {
            throw DivergenceError(fmt::format("round {}: aggregated weights are not finite", t), 0);
        }

        // Statistics for the next round's gate. A single update has no spread, so
        // fewer than two accepted updates fall back to everything received;
        // otherwise stale statistics could reject every later round.
        if (config.gate.stats_source == StatsSource::all || stats_source.size() < 2) stats_source = all_updates;
        if (records_stats && stats_source.size() >= 2) stats = update_server_stats(stats_source);

        if (records_stats) {
            const std::vector<double> recent(accepted_history.begin(), accepted_history.end());
            telemetry = kernel_report(telemetry, recent);
        }

        report.global_weights = w;
        double weighted_loss = 0.0;
        double total_samples = 0.0;
        for (const auto* c : by_id) {
            weighted_loss += static_cast<double>(c->n_k()) * local_loss(w, *c);
            total_samples += static_cast<double>(c->n_k());
        }
        report.global_loss = weighted_loss / total_samples;
        report.mean_beta = jobs.empty() ? 0.0 : beta_sum / static_cast<double>(jobs.size());
        report.telemetry = telemetry;
        if (on_round) on_round(report);
        history.rounds.push_back(std::move(report));
    }
    return history;
}

}  // namespace fedgate
