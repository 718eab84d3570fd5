#include "fedgate/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "fedgate/error.hpp"

namespace fedgate {

using nlohmann::json;
using nlohmann::ordered_json;

bool operator==(const SimulationConfig& a, const SimulationConfig& b) {
    auto solve_eq = [](const LocalSolveConfig& x, const LocalSolveConfig& y) {
        return x.epochs == y.epochs && x.learning_rate == y.learning_rate && x.batch_size == y.batch_size &&
               x.mu == y.mu;
    };
    auto gate_eq = [](const GateConfig& x, const GateConfig& y) {
        return x.width == y.width && x.mode == y.mode && x.stats_source == y.stats_source;
    };
    return a.algorithm == b.algorithm && a.n_devices == b.n_devices && a.devices_per_round == b.devices_per_round &&
           a.rounds == b.rounds && a.sampling == b.sampling && solve_eq(a.solve, b.solve) && gate_eq(a.gate, b.gate) &&
           a.straggler_fraction == b.straggler_fraction && a.straggler_policy == b.straggler_policy &&
           a.aggregation_weighting == b.aggregation_weighting && a.seed == b.seed && a.threads == b.threads &&
           a.initial_weights == b.initial_weights && a.problem == b.problem;
}

namespace {

ordered_json real_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

// Walks one JSON object, remembering which keys were read so the rest can be
// reported as unknown. Errors accumulate in the shared list.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (!obj_.is_object()) error("", "must be an object");
    }

    bool ok() const { return obj_.is_object(); }

    const json* find(const std::string& key, bool required) {
        seen_.insert(key);
        if (!ok()) return nullptr;
        auto it = obj_.find(key);
        if (it == obj_.end()) {
            if (required) error(key, "is required");
            return nullptr;
        }
        return &*it;
    }

    template <typename U>
    void unsigned_field(const std::string& key, U& out, bool required = true) {
        const json* v = find(key, required);
        if (!v) return;
        if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
            error(key, "must be a non-negative integer");
            return;
        }
        const auto raw = v->get<std::uint64_t>();
        if (raw > std::numeric_limits<U>::max()) {
            error(key, "is out of range");
            return;
        }
        out = static_cast<U>(raw);
    }

    void int_field(const std::string& key, int& out, bool required = true) {
        const json* v = find(key, required);
        if (!v) return;
        if (!v->is_number_integer()) {
            error(key, "must be an integer");
            return;
        }
        const auto raw = v->get<std::int64_t>();
        if (raw < std::numeric_limits<int>::min() || raw > std::numeric_limits<int>::max()) {
            error(key, "is out of range");
            return;
        }
        out = static_cast<int>(raw);
    }

    void real_field(const std::string& key, double& out, bool required = true) {
        const json* v = find(key, required);
        if (!v) return;
        if (v->is_number()) {
            out = v->get<double>();
        } else if (v->is_string() && (v->get<std::string>() == "inf" || v->get<std::string>() == "-inf")) {
            out = v->get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                 : -std::numeric_limits<double>::infinity();
        } else {
            error(key, "must be a number");
        }
    }

    void string_field(const std::string& key, std::string& out, bool required = true) {
        const json* v = find(key, required);
        if (!v) return;
        if (!v->is_string()) {
            error(key, "must be a string");
            return;
        }
        out = v->get<std::string>();
    }

    template <typename E, typename Parse>
    void enum_field(const std::string& key, E& out, Parse parse, bool required = true) {
        std::string text;
        const auto before = errors_.size();
        string_field(key, text, required);
        if (errors_.size() != before || text.empty()) return;
        try {
            out = parse(text);
        } catch (const ConfigError& e) {
            error(key, e.what());
        }
    }

    void real_array_field(const std::string& key, std::vector<double>& out, bool required = true) {
        const json* v = find(key, required);
        if (!v) return;
        read_real_array(*v, key, out);
    }

    bool read_real_array(const json& v, const std::string& key, std::vector<double>& out) {
        if (!v.is_array()) {
            error(key, "must be an array of numbers");
            return false;
        }
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) {
                error(key, "must contain only numbers");
                return false;
            }
            out.push_back(e.get<double>());
        }
        return true;
    }

    void finish() {
        if (!ok()) return;
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) error(key, "is not a recognised key");
        }
    }

    void error(const std::string& key, const std::string& what) {
        const std::string where = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
        errors_.push_back(fmt::format("'{}' {}", where.empty() ? "<root>" : where, what));
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json& obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

void read_synthetic(ObjectReader& r, SyntheticProblem& p) {
    r.unsigned_field("clients", p.clients);
    r.unsigned_field("samples_per_client", p.samples_per_client);
    r.real_field("slope", p.slope);
    r.real_field("intercept", p.intercept);
    r.real_field("noise_std", p.noise_std);
    r.real_field("x_min", p.x_min);
    r.real_field("x_max", p.x_max);
    r.unsigned_field("corrupted_clients", p.corrupted_clients);
    r.real_field("corruption_shift", p.corruption_shift);
    r.unsigned_field("seed", p.seed);
}

void read_csv_problem(ObjectReader& r, CsvProblem& p, std::vector<std::string>& errors) {
    r.string_field("dataset", p.dataset);
    r.string_field("x", p.x_col);
    r.string_field("y", p.y_col);
    if (const json* part = r.find("partition", true)) {
        ObjectReader pr(*part, r.child("partition"), errors);
        pr.enum_field("strategy", p.strategy, parse_partition_strategy);
        pr.real_field("skew", p.skew, false);
        pr.unsigned_field("seed", p.partition_seed);
        pr.finish();
    }
}

}  // namespace

ordered_json to_json(const SimulationConfig& cfg) {
    ordered_json j;
    j["algorithm"] = to_string(cfg.algorithm);
    j["n_devices"] = cfg.n_devices;
    j["devices_per_round"] = cfg.devices_per_round;
    j["rounds"] = cfg.rounds;
    switch (cfg.sampling.kind) {
        case SamplingKind::uniform: j["sampling"] = "uniform"; break;
        case SamplingKind::by_samples: j["sampling"] = "by_samples"; break;
        case SamplingKind::explicit_probs: j["sampling"] = cfg.sampling.probs; break;
    }
    j["solve"] = {{"epochs", cfg.solve.epochs},
                  {"learning_rate", cfg.solve.learning_rate},
                  {"batch_size", cfg.solve.batch_size},
                  {"mu", cfg.solve.mu}};
    j["gate"] = {{"width", real_json(cfg.gate.width)},
                 {"mode", to_string(cfg.gate.mode)},
                 {"stats_source", to_string(cfg.gate.stats_source)}};
    j["straggler_fraction"] = cfg.straggler_fraction;
    if (cfg.straggler_policy) j["straggler_policy"] = to_string(*cfg.straggler_policy);
    j["aggregation_weighting"] = to_string(cfg.aggregation_weighting);
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    if (!cfg.initial_weights.empty()) j["initial_weights"] = cfg.initial_weights;
    ordered_json problem;
    if (cfg.problem.synthetic) {
        const auto& p = *cfg.problem.synthetic;
        problem = {{"kind", "synthetic"},
                   {"clients", p.clients},
                   {"samples_per_client", p.samples_per_client},
                   {"slope", p.slope},
                   {"intercept", p.intercept},
                   {"noise_std", p.noise_std},
                   {"x_min", p.x_min},
                   {"x_max", p.x_max},
                   {"corrupted_clients", p.corrupted_clients},
                   {"corruption_shift", p.corruption_shift},
                   {"seed", p.seed}};
    } else if (cfg.problem.csv) {
        const auto& p = *cfg.problem.csv;
        problem = {{"kind", "csv"},
                   {"dataset", p.dataset},
                   {"x", p.x_col},
                   {"y", p.y_col},
                   {"partition",
                    {{"strategy", to_string(p.strategy)}, {"skew", p.skew}, {"seed", p.partition_seed}}}};
    }
    j["problem"] = problem;
    return j;
}

std::vector<std::string> semantic_errors(const SimulationConfig& cfg) {
    std::vector<std::string> errs;
    if (cfg.n_devices < 1) errs.push_back("n_devices must be >= 1");
    if (cfg.devices_per_round < 1) errs.push_back("devices_per_round must be >= 1");
    if (cfg.devices_per_round > cfg.n_devices) {
        errs.push_back(fmt::format("devices_per_round ({}) exceeds n_devices ({})", cfg.devices_per_round,
                                   cfg.n_devices));
    }
    if (cfg.rounds < 1) errs.push_back(fmt::format("rounds must be >= 1 (got {})", cfg.rounds));
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
    if (cfg.sampling.kind == SamplingKind::explicit_probs) {
        if (cfg.sampling.probs.size() != cfg.n_devices) {
            errs.push_back(fmt::format("sampling has {} probabilities for {} devices", cfg.sampling.probs.size(),
                                       cfg.n_devices));
        }
        double total = 0.0;
        for (double p : cfg.sampling.probs) {
            if (!(p >= 0.0)) errs.push_back("sampling probabilities must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) errs.push_back(fmt::format("sampling probabilities sum to {}, not 1", total));
    }
    if (!cfg.initial_weights.empty() && cfg.initial_weights.size() != 2) {
        errs.push_back(fmt::format("initial_weights must hold [slope, bias] (got {} values)", cfg.initial_weights.size()));
    }
    if (!cfg.problem.synthetic && !cfg.problem.csv) errs.push_back("problem must be given");
    if (cfg.problem.synthetic) {
        const auto& p = *cfg.problem.synthetic;
        if (p.clients != cfg.n_devices) {
            errs.push_back(fmt::format("problem.clients ({}) must equal n_devices ({})", p.clients, cfg.n_devices));
        }
        if (p.samples_per_client < 1) errs.push_back("problem.samples_per_client must be >= 1");
        if (p.corrupted_clients > p.clients) errs.push_back("problem.corrupted_clients exceeds problem.clients");
        if (!(p.x_max > p.x_min)) errs.push_back("problem.x_max must exceed problem.x_min");
        if (!(p.noise_std >= 0.0)) errs.push_back("problem.noise_std must be >= 0");
    }
    if (cfg.problem.csv) {
        const auto& p = *cfg.problem.csv;
        if (!(p.skew >= 0.0 && p.skew <= 1.0)) errs.push_back("problem.partition.skew must lie in [0,1]");
        if (p.dataset.empty()) errs.push_back("problem.dataset must not be empty");
    }
    return errs;
}

SimulationConfig simulation_config_from_json(const json& doc) {
    std::vector<std::string> errors;
    SimulationConfig cfg;
    ObjectReader r(doc, "", errors);
    r.enum_field("algorithm", cfg.algorithm, parse_algorithm);
    r.unsigned_field("n_devices", cfg.n_devices);
    r.unsigned_field("devices_per_round", cfg.devices_per_round);
    r.int_field("rounds", cfg.rounds);

    if (const json* s = r.find("sampling", false)) {
        if (s->is_string()) {
            const auto text = s->get<std::string>();
            if (text == "uniform") {
                cfg.sampling.kind = SamplingKind::uniform;
            } else if (text == "by_samples") {
                cfg.sampling.kind = SamplingKind::by_samples;
            } else {
                r.error("sampling", "must be \"uniform\", \"by_samples\" or an array of probabilities");
            }
        } else if (r.read_real_array(*s, "sampling", cfg.sampling.probs)) {
            cfg.sampling.kind = SamplingKind::explicit_probs;
        }
    }

    if (const json* s = r.find("solve", true)) {
        ObjectReader sr(*s, "solve", errors);
        sr.int_field("epochs", cfg.solve.epochs);
        sr.real_field("learning_rate", cfg.solve.learning_rate);
        sr.unsigned_field("batch_size", cfg.solve.batch_size, false);
        sr.real_field("mu", cfg.solve.mu, false);
        sr.finish();
    }
    if (const json* g = r.find("gate", false)) {
        ObjectReader gr(*g, "gate", errors);
        gr.real_field("width", cfg.gate.width, false);
        gr.enum_field("mode", cfg.gate.mode, parse_gate_mode, false);
        gr.enum_field("stats_source", cfg.gate.stats_source, parse_stats_source, false);
        gr.finish();
    }
    r.real_field("straggler_fraction", cfg.straggler_fraction, false);
    if (r.find("straggler_policy", false)) {
        StragglerPolicy p = StragglerPolicy::partial;
        const auto before = errors.size();
        r.enum_field("straggler_policy", p, parse_straggler_policy, false);
        if (errors.size() == before) cfg.straggler_policy = p;
    }
    r.enum_field("aggregation_weighting", cfg.aggregation_weighting, parse_aggregation_weighting, false);
    r.unsigned_field("seed", cfg.seed);
    r.unsigned_field("threads", cfg.threads, false);
    r.real_array_field("initial_weights", cfg.initial_weights, false);

    if (const json* p = r.find("problem", true)) {
        ObjectReader pr(*p, "problem", errors);
        std::string kind;
        pr.string_field("kind", kind);
        if (kind == "synthetic") {
            SyntheticProblem sp;
            read_synthetic(pr, sp);
            cfg.problem.synthetic = sp;
        } else if (kind == "csv") {
            CsvProblem cp;
            read_csv_problem(pr, cp, errors);
            cfg.problem.csv = cp;
        } else if (!kind.empty()) {
            pr.error("kind", fmt::format("must be \"synthetic\" or \"csv\" (got \"{}\")", kind));
        }
        if (!kind.empty() && kind != "synthetic" && kind != "csv") {
            // Unknown kind: skip the unknown-key sweep, it would only repeat the problem.
        } else {
            pr.finish();
        }
    }
    r.finish();

    if (errors.empty()) {
        const auto more = semantic_errors(cfg);
        errors.insert(errors.end(), more.begin(), more.end());
    }
    if (!errors.empty()) {
        throw ConfigError(fmt::format("{} configuration error(s):\n  - {}", errors.size(), fmt::join(errors, "\n  - ")));
    }
    return cfg;
}

SimulationConfig load_simulation_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
    }
    if (doc.is_object() && doc.contains("manifest")) {
        const auto& m = doc["manifest"];
        if (!m.is_object() || !m.contains("config")) {
            throw ConfigError(fmt::format("'{}': manifest has no embedded config", path.string()));
        }
        return simulation_config_from_json(m["config"]);
    }
    return simulation_config_from_json(doc);
}

FederationConfig to_federation_config(const SimulationConfig& cfg, const std::vector<ClientDataset>& clients) {
    FederationConfig f;
    f.algorithm = cfg.algorithm;
    f.n_devices = cfg.n_devices;
    f.devices_per_round = cfg.devices_per_round;
    f.rounds = cfg.rounds;
    switch (cfg.sampling.kind) {
        case SamplingKind::uniform: f.sampling_probs = uniform_probs(cfg.n_devices); break;
        case SamplingKind::explicit_probs: f.sampling_probs = cfg.sampling.probs; break;
        case SamplingKind::by_samples: {
            double total = 0.0;
            for (const auto& c : clients) total += static_cast<double>(c.n_k());
            for (const auto& c : clients) f.sampling_probs.push_back(static_cast<double>(c.n_k()) / total);
            break;
        }
    }
    f.solve = cfg.solve;
    f.gate = cfg.gate;
    f.straggler_fraction = cfg.straggler_fraction;
    f.straggler_policy = cfg.straggler_policy.value_or(default_straggler_policy(cfg.algorithm));
    f.aggregation_weighting = cfg.aggregation_weighting;
    f.seed = cfg.seed;
    f.threads = cfg.threads;
    return f;
}

}  // namespace fedgate
