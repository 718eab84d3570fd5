#include "fedgate/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "fedgate/error.hpp"
#include "fedgate/synthetic.hpp"

namespace fedgate {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json weights_json(const WeightVector& w) { return w.flat(); }

}  // namespace

ordered_json to_json(const DatasetFingerprint& fp) {
    return {{"name", fp.name},
            {"path", fp.path},
            {"row_count", fp.row_count},
            {"columns", fp.columns},
            {"checksum", hex64(fp.checksum)}};
}

ordered_json to_json(const RunManifest& m) {
    ordered_json datasets = ordered_json::array();
    for (const auto& d : m.datasets) datasets.push_back(to_json(d));
    return {{"tool", kToolName},     {"version", kToolVersion}, {"command", m.command},
            {"seed", m.seed},        {"config", m.config},      {"datasets", datasets}};
}

PreparedProblem prepare_problem(const SimulationConfig& cfg) {
    PreparedProblem out;
    if (cfg.problem.synthetic) {
        auto fleet = generate_fleet(*cfg.problem.synthetic);
        out.clients = std::move(fleet.clients);
        out.reference_optimum = fleet.clean_optimum;
    } else if (cfg.problem.csv) {
        const auto& p = *cfg.problem.csv;
        const auto loaded = load_dataset(resolve_dataset(p.dataset), p.x_col, p.y_col);
        PartitionSpec spec;
        spec.n_clients = cfg.n_devices;
        spec.strategy = p.strategy;
        spec.skew = p.skew;
        spec.seed = p.partition_seed;
        out.clients = partition(loaded.data, spec, p.x_col, p.y_col);
        out.reference_optimum = fit_least_squares(loaded.data, p.x_col, p.y_col);
        out.datasets.push_back(loaded.fingerprint);
    } else {
        throw ConfigError("config has no problem section");
    }
    return out;
}

SimulationResult run_simulation(const SimulationConfig& cfg, const RoundCallback& on_round) {
    if (auto errs = semantic_errors(cfg); !errs.empty()) {
        throw ConfigError(fmt::format("{} configuration error(s):\n  - {}", errs.size(), fmt::join(errs, "\n  - ")));
    }
    auto problem = prepare_problem(cfg);
    const std::size_t dim = problem.clients.empty() ? 1 : problem.clients.front().dim;
    WeightVector w0(dim);
    if (!cfg.initial_weights.empty()) {
        if (cfg.initial_weights.size() != dim + 1) {
            throw ConfigError(fmt::format("initial_weights has {} values, the model needs {}",
                                          cfg.initial_weights.size(), dim + 1));
        }
        w0 = WeightVector::from_flat(cfg.initial_weights);
    }
    SimulationResult result;
    result.manifest.command = "simulate";
    result.manifest.seed = cfg.seed;
    result.manifest.config = to_json(cfg);
    result.manifest.datasets = problem.datasets;
    result.reference_optimum = problem.reference_optimum;
    result.history = run(to_federation_config(cfg, problem.clients), problem.clients, w0, on_round);
    return result;
}

ordered_json round_json(const RoundReport& r) {
    ordered_json clients = ordered_json::array();
    for (const auto& c : r.clients) {
        clients.push_back({{"client_id", c.client_id},
                           {"epochs", c.epochs},
                           {"straggler", c.straggler},
                           {"dropped", c.dropped},
                           {"g_scale", c.g_scale},
                           {"beta", c.beta},
                           {"accepted", c.accepted},
                           {"g_value", c.g_value},
                           {"offending_coordinates", c.offending_coordinates}});
    }
    const auto& t = r.telemetry;
    ordered_json telemetry = {
        {"accepted", r.accepted.size()},
        {"rejected", r.rejected.size()},
        {"total_seen", t.total_seen},
        {"total_rejected", t.total_rejected},
        {"n0", t.n0},
        {"kurtosis_raw", t.kurtosis_available ? ordered_json(t.kurtosis_raw) : ordered_json(nullptr)},
        {"kurtosis_excess", t.kurtosis_available ? ordered_json(t.kurtosis_excess) : ordered_json(nullptr)},
        {"tail_class", t.kurtosis_available ? ordered_json(to_string(t.tail_class)) : ordered_json(nullptr)},
        {"kurtosis_n0_ratio", opt(t.kurtosis_n0_ratio)},
    };
    return {{"round", r.round},
            {"selected", r.selected},
            {"accepted", r.accepted},
            {"rejected", r.rejected},
            {"dropped", r.dropped},
            {"gated", r.gated},
            {"empty_aggregation", r.empty_aggregation},
            {"global_weights", weights_json(r.global_weights)},
            {"global_loss", r.global_loss},
            {"mean_beta", r.mean_beta},
            {"clients", clients},
            {"telemetry", telemetry}};
}

namespace {

double mean_n0(const std::vector<ClientSummary>& clients) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : clients) {
        if (c.never_participated) continue;
        sum += c.n0;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

ordered_json summary_json(const SimulationResult& result) {
    const auto& h = result.history;
    const WeightVector& final_w = h.rounds.empty() ? h.initial_weights : h.rounds.back().global_weights;
    ordered_json trajectory = ordered_json::array({weights_json(h.initial_weights)});
    ordered_json losses = ordered_json::array();
    ordered_json rounds = ordered_json::array();
    for (const auto& r : h.rounds) {
        trajectory.push_back(weights_json(r.global_weights));
        losses.push_back(r.global_loss);
        rounds.push_back({{"round", r.round},
                          {"selected", r.selected.size()},
                          {"accepted", r.accepted.size()},
                          {"rejected", r.rejected.size()},
                          {"dropped", r.dropped.size()},
                          {"empty_aggregation", r.empty_aggregation}});
    }
    ordered_json clients = ordered_json::array();
    for (const auto& c : h.clients) {
        clients.push_back({{"client_id", c.client_id},
                           {"participations", c.participations},
                           {"rejections", c.rejections},
                           {"n0", c.n0},
                           {"never_participated", c.never_participated}});
    }
    std::optional<double> dist;
    if (result.reference_optimum) dist = distance(final_w, *result.reference_optimum);
    return {{"schema_version", kSchemaVersion},
            {"kind", "simulation_summary"},
            {"manifest", to_json(result.manifest)},
            {"reference_optimum",
             result.reference_optimum ? weights_json(*result.reference_optimum) : ordered_json(nullptr)},
            {"final",
             {{"weights", weights_json(final_w)},
              {"loss", h.rounds.empty() ? 0.0 : h.rounds.back().global_loss},
              {"distance", opt(dist)},
              {"mean_n0", mean_n0(h.clients)}}},
            {"trajectory", trajectory},
            {"losses", losses},
            {"rounds", rounds},
            {"clients", clients}};
}

ordered_json analysis_json(const ExperimentResult& r, const RunManifest& manifest) {
    ordered_json observations = ordered_json::array();
    for (const auto& o : r.observations) {
        observations.push_back(
            {{"attribute", o.attribute}, {"actual", o.actual}, {"normal", o.normal}, {"optimized", o.optimized}});
    }
    ordered_json deviations = ordered_json::array();
    for (const auto& d : r.deviations) {
        deviations.push_back({{"attribute", d.attribute},
                              {"nta", opt(d.nta)},
                              {"ota", opt(d.ota)},
                              {"otn", opt(d.otn)},
                              {"improvement", opt(d.improvement)}});
    }
    auto line = [](const std::optional<PlotLine>& l) {
        if (!l) return ordered_json(nullptr);
        return ordered_json{{"x0", l->x0}, {"y0", l->y0}, {"x1", l->x1}, {"y1", l->y1}};
    };
    return {{"schema_version", kSchemaVersion},
            {"kind", "filter_experiment"},
            {"manifest", to_json(manifest)},
            {"dataset", r.dataset},
            {"x", r.x_col},
            {"y", r.y_col},
            {"width", std::isinf(r.width) ? ordered_json("inf") : ordered_json(r.width)},
            {"raw_rows", r.raw_rows},
            {"filtered_rows", r.filtered_rows},
            {"joint_filtered_rows", r.joint_filtered_rows},
            {"observations", observations},
            {"deviations", deviations},
            {"raw_line", line(r.raw_line)},
            {"filtered_line", line(r.filtered_line)}};
}

ordered_json run_info_json(const std::vector<std::string>& argv, const std::string& started,
                           const std::string& finished) {
    return {{"tool", kToolName}, {"version", kToolVersion}, {"argv", argv}, {"started", started}, {"finished", finished}};
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
}

namespace {

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    return s;
}

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:g}", *v) : "n/a"; }

std::string table(const std::string& title, const std::vector<std::string>& heads,
                  const std::vector<std::pair<std::string, std::vector<std::string>>>& rows) {
    std::size_t first = title.size();
    for (const auto& r : rows) first = std::max(first, r.first.size());
    std::vector<std::size_t> widths;
    for (std::size_t c = 0; c < heads.size(); ++c) {
        std::size_t w = heads[c].size();
        for (const auto& r : rows) w = std::max(w, r.second[c].size());
        widths.push_back(w);
    }
    std::string out = fmt::format("{:<{}}", title, first);
    for (std::size_t c = 0; c < heads.size(); ++c) out += fmt::format("  {:>{}}", heads[c], widths[c]);
    out += "\n";
    for (const auto& r : rows) {
        out += fmt::format("{:<{}}", r.first, first);
        for (std::size_t c = 0; c < heads.size(); ++c) out += fmt::format("  {:>{}}", r.second[c], widths[c]);
        out += "\n";
    }
    return out;
}

}  // namespace

std::string format_analysis_tables(const ExperimentResult& r) {
    std::vector<std::string> heads;
    std::vector<std::string> actual, normal, optimized, nta, ota, otn;
    for (const auto& o : r.observations) {
        heads.push_back(upper(o.attribute));
        actual.push_back(fmt::format("{:g}", o.actual));
        normal.push_back(fmt::format("{:g}", o.normal));
        optimized.push_back(fmt::format("{:g}", o.optimized));
    }
    for (const auto& d : r.deviations) {
        nta.push_back(cell(d.nta));
        ota.push_back(cell(d.ota));
        otn.push_back(cell(d.otn));
    }
    std::string out = table("OBSERVATION", heads, {{"ACTUAL", actual}, {"NORMAL", normal}, {"OPTIMIZED", optimized}});
    out += "\n";
    out += table("DEVIATIONS", heads, {{"NTA", nta}, {"OTA", ota}, {"OTN", otn}});
    out += "\n";
    std::vector<std::pair<std::string, std::vector<std::string>>> result_rows;
    for (std::size_t i = 0; i < r.deviations.size(); ++i) {
        result_rows.push_back({heads[i], {cell(r.deviations[i].improvement)}});
    }
    out += table("RESULT", {"VALUE (%)"}, result_rows);
    return out;
}

SummaryDigest digest_summary(const json& s, const std::string& label) {
    try {
        if (s.at("kind").get<std::string>() != "simulation_summary") throw DataError("not a simulation summary");
        SummaryDigest d;
        d.label = label;
        d.algorithm = s.at("manifest").at("config").at("algorithm").get<std::string>();
        const auto& fin = s.at("final");
        d.weight_size = fin.at("weights").size();
        d.final_loss = fin.at("loss").get<double>();
        if (!fin.at("distance").is_null()) d.final_distance = fin.at("distance").get<double>();
        d.mean_n0 = fin.at("mean_n0").get<double>();
        for (const auto& r : s.at("rounds")) {
            ++d.rounds;
            if (r.at("empty_aggregation").get<bool>()) ++d.empty_rounds;
            d.total_rejected += r.at("rejected").get<std::size_t>();
        }
        return d;
    } catch (const json::exception& e) {
        throw DataError(fmt::format("{}: not a simulation summary ({})", label, e.what()));
    } catch (const DataError& e) {
        throw DataError(fmt::format("{}: {}", label, e.what()));
    }
}

std::string format_comparison(const std::vector<SummaryDigest>& digests) {
    if (digests.size() < 2) throw ConfigError("compare needs at least two summaries");
    for (const auto& d : digests) {
        if (d.weight_size != digests.front().weight_size) {
            throw DataError(fmt::format("{} has {} weights but {} has {}; the runs are not comparable", d.label,
                                        d.weight_size, digests.front().label, digests.front().weight_size));
        }
    }
    std::vector<std::string> heads;
    std::vector<std::string> algo, rounds, empty, loss, dist, n0, rej;
    for (const auto& d : digests) {
        heads.push_back(d.label);
        algo.push_back(d.algorithm);
        rounds.push_back(std::to_string(d.rounds));
        empty.push_back(std::to_string(d.empty_rounds));
        loss.push_back(fmt::format("{:.6g}", d.final_loss));
        dist.push_back(d.final_distance ? fmt::format("{:.6g}", *d.final_distance) : "n/a");
        n0.push_back(fmt::format("{:.4f}", d.mean_n0));
        rej.push_back(std::to_string(d.total_rejected));
    }
    return table("RUN", heads,
                 {{"algorithm", algo},
                  {"rounds", rounds},
                  {"empty rounds", empty},
                  {"final loss", loss},
                  {"distance to optimum", dist},
                  {"mean n0", n0},
                  {"rejected updates", rej}});
}

}  // namespace fedgate
