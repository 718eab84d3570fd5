#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "fedgate/analysis.hpp"
#include "fedgate/config.hpp"
#include "fedgate/error.hpp"
#include "fedgate/registry.hpp"
#include "fedgate/report.hpp"

namespace fs = std::filesystem;
using namespace fedgate;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

std::string now_utc() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                     std::chrono::system_clock::now())));
}

double parse_width(const std::string& text) {
    if (text == "inf" || text == "none") return kNoFilter;
    double w = 0.0;
    try {
        std::size_t used = 0;
        w = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("--width expects a positive number or 'inf', got '{}'", text));
    }
    if (!(w > 0.0)) throw ConfigError(fmt::format("--width must be > 0, got {}", text));
    return w;
}

struct AnalyzeArgs {
    std::string data;
    std::string x;
    std::string y;
    std::string width = "2";
    std::string out = "out/analyze";
};

int cmd_analyze(const AnalyzeArgs& a, const std::vector<std::string>& argv) {
    const auto started = now_utc();
    const double width = parse_width(a.width);
    const auto resolved = resolve_dataset(a.data);
    std::string x = a.x, y = a.y;
    if (resolved.entry) {
        if (x.empty()) x = resolved.entry->x_col;
        if (y.empty()) y = resolved.entry->y_col;
    }
    if (x.empty() || y.empty()) throw ConfigError("--x and --y are required for datasets outside the registry");

    auto loaded = load_dataset(resolved, x, y);
    if (!resolved.entry) loaded.data = loaded.data.with_name(resolved.path.stem().string());
    const auto result = run_filter_experiment(loaded.data, x, y, width);

    RunManifest manifest;
    manifest.command = "analyze";
    manifest.config = {{"data", a.data},
                       {"x", x},
                       {"y", y},
                       {"width", std::isinf(width) ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(width)}};
    manifest.datasets.push_back(loaded.fingerprint);

    const fs::path out(a.out);
    fs::create_directories(out);
    const auto report_path = out / (result.dataset + "_analysis.json");
    write_text(report_path, dump(analysis_json(result, manifest)));
    const auto plots = emit_plot_data(result, out);
    write_text(out / "run_info.json", dump(run_info_json(argv, started, now_utc())));

    std::cout << fmt::format("{}: {} rows, width {}\n", result.dataset, result.raw_rows, a.width);
    std::cout << fmt::format("filtered rows: {} {}, {} {}, joint {}\n\n", x, result.filtered_rows.at(0), y,
                             result.filtered_rows.at(1), result.joint_filtered_rows);
    std::cout << format_analysis_tables(result) << "\n";
    std::cout << "wrote " << report_path.string() << "\n";
    for (const auto& p : plots) std::cout << "wrote " << p.string() << "\n";
    return kOk;
}

struct SimulateArgs {
    std::string config;
    std::string out = "out/simulate";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> width;
    bool quiet = false;
};

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
    const auto started = now_utc();
    auto cfg = load_simulation_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.width) cfg.gate.width = parse_width(*a.width);

    const fs::path out(a.out);
    fs::create_directories(out);
    std::ofstream stream(out / "rounds.jsonl", std::ios::binary);
    if (!stream) throw DataError(fmt::format("cannot write {}", (out / "rounds.jsonl").string()));

    if (!a.quiet) std::cout << fmt::format("{:>5}  {:>12}  {:>4}  {:>4}  {:>4}  {:>7}\n", "round", "loss", "acc", "rej", "drop", "n0");
    const auto result = run_simulation(cfg, [&](const RoundReport& r) {
        stream << round_json(r).dump() << '\n';
        if (!a.quiet) {
            std::cout << fmt::format("{:>5}  {:>12.6g}  {:>4}  {:>4}  {:>4}  {:>7.4f}{}\n", r.round, r.global_loss,
                                     r.accepted.size(), r.rejected.size(), r.dropped.size(), r.telemetry.n0,
                                     r.empty_aggregation ? "  (empty aggregation)" : "");
        }
    });
    stream.close();

    const auto summary = summary_json(result);
    write_text(out / "summary.json", dump(summary));
    write_text(out / "run_info.json", dump(run_info_json(argv, started, now_utc())));

    const auto& fin = summary["final"];
    std::cout << fmt::format("final weights {}  loss {:.6g}", fin["weights"].dump(), fin["loss"].get<double>());
    if (!fin["distance"].is_null()) std::cout << fmt::format("  distance {:.6g}", fin["distance"].get<double>());
    std::cout << fmt::format("  mean n0 {:.4f}\n", fin["mean_n0"].get<double>());
    std::cout << "client n0:";
    for (const auto& c : result.history.clients) {
        std::cout << fmt::format(" {}:{}", c.client_id, c.never_participated ? "-" : fmt::format("{:.2f}", c.n0));
    }
    std::cout << "\nwrote " << (out / "summary.json").string() << " and " << (out / "rounds.jsonl").string() << "\n";
    return kOk;
}

int cmd_compare(const std::vector<std::string>& files) {
    if (files.size() < 2) throw ConfigError("compare needs at least two summary files");
    std::vector<SummaryDigest> digests;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw DataError(fmt::format("cannot open {}", f));
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(fmt::format("{} is not valid JSON: {}", f, e.what()));
        }
        digests.push_back(digest_summary(doc, f));
    }
    std::cout << format_comparison(digests);
    return kOk;
}

int cmd_fetch(std::vector<std::string> names, const std::string& out) {
    if (names.empty()) {
        for (const auto& e : dataset_registry()) names.push_back(e.name);
    }
    int rc = kOk;
    for (const auto& name : names) {
        const DatasetEntry* entry = find_dataset(name);
        if (!entry) {
            std::cerr << fmt::format("{}: unknown dataset\n", name);
            rc = kData;
            continue;
        }
        try {
            if (auto existing = locate(*entry)) {
                load_dataset({*existing, entry}, entry->x_col, entry->y_col);
                std::cout << fmt::format("{}: present at {}\n", entry->name, existing->string());
                continue;
            }
            const auto path = fetch_dataset(*entry, out);
            std::cout << fmt::format("{}: downloaded to {}\n", entry->name, path.string());
        } catch (const std::exception& e) {
            std::cerr << fmt::format("{}: {}\n", entry->name, e.what());
            rc = kData;
        }
    }
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"Federated learning simulator with a Gaussian update gate, and a 2-sigma filter analysis."};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    AnalyzeArgs analyze;
    auto* an = app.add_subcommand("analyze", "Run the 2-sigma filter experiment on one dataset");
    an->add_option("--data", analyze.data, "CSV path or registry name (iris, socr-height-weight, heart-disease)")
        ->required();
    an->add_option("--x", analyze.x, "x column (defaults to the registry entry's)");
    an->add_option("--y", analyze.y, "y column (defaults to the registry entry's)");
    an->add_option("--width", analyze.width, "window half-width in standard deviations, or inf")
        ->capture_default_str();
    an->add_option("--out", analyze.out, "output directory")->capture_default_str();

    SimulateArgs sim;
    auto* si = app.add_subcommand("simulate", "Run a federated simulation from a JSON config or a previous summary");
    si->add_option("--config", sim.config, "config file, or a summary.json to re-run")->required();
    si->add_option("--out", sim.out, "output directory")->capture_default_str();
    si->add_option("--seed", sim.seed, "override the run seed");
    si->add_option("--width", sim.width, "override gate.width (number or inf)");
    si->add_flag("--quiet", sim.quiet, "only print the final line");

    std::vector<std::string> compare_files;
    auto* co = app.add_subcommand("compare", "Compare two or more simulation summaries");
    co->add_option("summaries", compare_files, "summary.json files");

    std::vector<std::string> fetch_names;
    std::string fetch_out = "data";
    auto* fe = app.add_subcommand("fetch", "Download registry datasets that are missing");
    fe->add_option("names", fetch_names, "dataset names (default: all)");
    fe->add_option("--out", fetch_out, "destination directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*an) return cmd_analyze(analyze, args);
        if (*si) return cmd_simulate(sim, args);
        if (*co) return cmd_compare(compare_files);
        if (*fe) return cmd_fetch(fetch_names, fetch_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
