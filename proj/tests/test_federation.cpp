#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fedgate/error.hpp"
#include "fedgate/federation.hpp"
#include "fedgate/synthetic.hpp"
#include "support.hpp"

using namespace fedgate;

namespace {

std::vector<ClientDataset> iid_fleet(std::size_t n, std::size_t per_client, std::uint64_t seed) {
    std::vector<ClientDataset> clients;
    for (std::size_t k = 0; k < n; ++k) {
        clients.push_back(testsupport::linear_client(static_cast<int>(k), per_client, 2.0, 1.0, 0.5, seed * 1000 + k));
    }
    return clients;
}

FederationConfig base_config(Algorithm a, std::size_t n, std::size_t k, int rounds) {
    FederationConfig c;
    c.algorithm = a;
    c.n_devices = n;
    c.devices_per_round = k;
    c.rounds = rounds;
    c.sampling_probs = uniform_probs(n);
    c.solve = {5, 0.05, 16, 0.1, 0};
    c.straggler_policy = default_straggler_policy(a);
    c.seed = 1234;
    return c;
}

std::vector<WeightVector> trajectory(const RunHistory& h) {
    std::vector<WeightVector> t{h.initial_weights};
    for (const auto& r : h.rounds) t.push_back(r.global_weights);
    return t;
}

}  // namespace

TEST_SUITE("sampling") {
    TEST_CASE("all devices when K = N") {
        Rng rng(1);
        auto s = sample_devices(6, 6, uniform_probs(6), rng);
        std::sort(s.begin(), s.end());
        CHECK(s == std::vector<int>{0, 1, 2, 3, 4, 5});
    }

    TEST_CASE("distinct ids and zero mass never drawn") {
        Rng rng(2);
        const std::vector<double> probs{0.25, 0.0, 0.25, 0.25, 0.25};
        for (int i = 0; i < 1000; ++i) {
            const auto s = sample_devices(5, 3, probs, rng);
            CHECK(std::set<int>(s.begin(), s.end()).size() == 3);
            CHECK(std::find(s.begin(), s.end(), 1) == s.end());
        }
    }

    TEST_CASE("single draw frequencies follow the probabilities") {
        Rng rng(3);
        const std::vector<double> probs{0.1, 0.2, 0.3, 0.4};
        std::vector<int> hits(4, 0);
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) ++hits[sample_devices(4, 1, probs, rng)[0]];
        for (std::size_t k = 0; k < 4; ++k) {
            const double f = static_cast<double>(hits[k]) / draws;
            const double sigma = std::sqrt(probs[k] * (1 - probs[k]) / draws);
            CHECK(std::abs(f - probs[k]) < 0.02);
            CHECK(std::abs(f - probs[k]) < 5 * sigma);
        }
    }

    TEST_CASE("infeasible K and bad probabilities") {
        Rng rng(4);
        CHECK_THROWS_AS(sample_devices(3, 3, {0.5, 0.5, 0.0}, rng), ConfigError);
        CHECK_THROWS_AS(sample_devices(3, 1, {0.5, 0.5}, rng), ConfigError);
    }

    TEST_CASE("deterministic given the stream") {
        Rng a(9), b(9);
        CHECK(sample_devices(20, 7, uniform_probs(20), a) == sample_devices(20, 7, uniform_probs(20), b));
    }
}

TEST_SUITE("stragglers") {
    std::vector<int> ids(std::size_t n) {
        std::vector<int> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
        return v;
    }

    TEST_CASE("no stragglers") {
        auto cfg = base_config(Algorithm::fedprox, 10, 10, 1);
        cfg.solve.epochs = 7;
        Rng rng(1);
        for (const auto& [id, e] : assign_straggler_epochs(ids(10), cfg, rng)) CHECK(e == 7);
    }

    TEST_CASE("all stragglers with E = 2 get one epoch") {
        auto cfg = base_config(Algorithm::fedprox, 10, 10, 1);
        cfg.solve.epochs = 2;
        cfg.straggler_fraction = 1.0;
        Rng rng(1);
        for (const auto& [id, e] : assign_straggler_epochs(ids(10), cfg, rng)) CHECK(e == 1);
    }

    TEST_CASE("straggler count within the binomial 99% interval") {
        auto cfg = base_config(Algorithm::fedprox, 1000, 1000, 1);
        cfg.solve.epochs = 10;
        cfg.straggler_fraction = 0.5;
        Rng rng(5);
        const auto m = assign_straggler_epochs(ids(1000), cfg, rng);
        int stragglers = 0;
        for (const auto& [id, e] : m) {
            CHECK(e >= 1);
            CHECK(e <= 10);
            stragglers += e < 10;
        }
        // 500 +- 2.576 * sqrt(1000 * 0.25)
        CHECK(stragglers >= 460);
        CHECK(stragglers <= 540);
    }
}

TEST_SUITE("aggregate") {
    TEST_CASE("examples") {
        const WeightVector a = WeightVector::from_flat({0.0}), b = WeightVector::from_flat({2.0});
        CHECK(aggregate({{a, 1}, {b, 1}}, AggregationWeighting::uniform)[0] == 1.0);
        CHECK(aggregate({{a, 1}, {WeightVector::from_flat({3.0}), 2}}, AggregationWeighting::by_samples)[0] == 2.0);
        const WeightVector c({1.5}, -0.25);
        CHECK(aggregate({{c, 3}, {c, 9}, {c, 1}}, AggregationWeighting::by_samples) == c);
        CHECK(aggregate({{c, 3}, {c, 9}, {c, 1}}, AggregationWeighting::uniform) == c);
        CHECK_THROWS_AS(aggregate({}, AggregationWeighting::uniform), DataError);
        CHECK_THROWS(aggregate({{a, 1}, {WeightVector(1), 1}}, AggregationWeighting::uniform));
    }

    TEST_CASE("order does not matter") {
        Rng rng(8);
        std::vector<WeightedUpdate> ups;
        for (int i = 0; i < 12; ++i) ups.push_back({WeightVector({rng.normal(0, 10)}, rng.normal()), 1 + rng.below(50)});
        for (auto mode : {AggregationWeighting::uniform, AggregationWeighting::by_samples}) {
            const auto ref = aggregate(ups, mode);
            auto shuffled = ups;
            rng.shuffle(std::span(shuffled));
            const auto got = aggregate(shuffled, mode);
            for (std::size_t j = 0; j < ref.size(); ++j) CHECK(got[j] == doctest::Approx(ref[j]).epsilon(1e-12));
        }
    }
}

TEST_SUITE("run") {
    TEST_CASE("passthrough gate reproduces fedprox bit for bit") {
        const auto clients = iid_fleet(10, 40, 1);
        auto prox = base_config(Algorithm::fedprox, 10, 5, 20);
        prox.straggler_fraction = 0.3;
        auto g = prox;
        g.algorithm = Algorithm::gfedprox;
        g.gate.mode = GateMode::passthrough;
        CHECK(trajectory(run(prox, clients, WeightVector(1))) == trajectory(run(g, clients, WeightVector(1))));
    }

    TEST_CASE("fedprox with mu = 0 and no stragglers is fedavg") {
        const auto clients = iid_fleet(10, 40, 2);
        auto avg = base_config(Algorithm::fedavg, 10, 5, 20);
        auto prox = base_config(Algorithm::fedprox, 10, 5, 20);
        avg.solve.mu = prox.solve.mu = 0.0;
        CHECK(trajectory(run(avg, clients, WeightVector(1))) == trajectory(run(prox, clients, WeightVector(1))));
    }

    TEST_CASE("all three algorithms reach the pooled least-squares fit") {
        const auto clients = iid_fleet(10, 100, 3);
        const auto pooled = pooled_least_squares(clients);
        for (auto a : {Algorithm::fedavg, Algorithm::fedprox, Algorithm::gfedprox}) {
            CAPTURE(to_string(a));
            auto cfg = base_config(a, 10, 5, 50);
            const auto h = run(cfg, clients, WeightVector(1));
            REQUIRE(h.rounds.size() == 50);
            CHECK(distance(h.rounds.back().global_weights, pooled) < 0.1);
        }
    }

    TEST_CASE("determinism and thread independence") {
        const auto clients = iid_fleet(12, 30, 4);
        auto cfg = base_config(Algorithm::gfedprox, 12, 6, 15);
        cfg.straggler_fraction = 0.2;
        const auto a = run(cfg, clients, WeightVector(1));
        const auto b = run(cfg, clients, WeightVector(1));
        cfg.threads = 4;
        const auto c = run(cfg, clients, WeightVector(1));
        CHECK(trajectory(a) == trajectory(b));
        CHECK(trajectory(a) == trajectory(c));
        for (std::size_t t = 0; t < a.rounds.size(); ++t) {
            CHECK(a.rounds[t].accepted == c.rounds[t].accepted);
            CHECK(a.rounds[t].global_loss == c.rounds[t].global_loss);
        }
    }

    TEST_CASE("permuting the client list changes nothing") {
        auto clients = iid_fleet(8, 30, 5);
        auto cfg = base_config(Algorithm::gfedprox, 8, 4, 10);
        cfg.sampling_probs = {0.05, 0.1, 0.15, 0.2, 0.1, 0.1, 0.2, 0.1};
        const auto ref = run(cfg, clients, WeightVector(1));
        const std::vector<std::size_t> perm{3, 7, 0, 5, 1, 6, 2, 4};
        std::vector<ClientDataset> shuffled;
        std::vector<double> probs;
        for (auto i : perm) {
            shuffled.push_back(clients[i]);
            probs.push_back(cfg.sampling_probs[i]);
        }
        auto pcfg = cfg;
        pcfg.sampling_probs = probs;
        const auto got = run(pcfg, shuffled, WeightVector(1));
        const auto ta = trajectory(ref), tb = trajectory(got);
        REQUIRE(ta.size() == tb.size());
        for (std::size_t t = 0; t < ta.size(); ++t) {
            for (std::size_t j = 0; j < ta[t].size(); ++j) CHECK(tb[t][j] == doctest::Approx(ta[t][j]).epsilon(1e-12));
        }
    }

    TEST_CASE("report bookkeeping") {
        SyntheticProblem p;
        p.clients = 10;
        p.samples_per_client = 50;
        p.corrupted_clients = 2;
        p.seed = 6;
        const auto fleet = generate_fleet(p);
        auto cfg = base_config(Algorithm::gfedprox, 10, 5, 30);
        cfg.solve = {10, 0.1, 32, 0.05, 0};
        cfg.straggler_fraction = 0.2;
        const auto h = run(cfg, fleet.clients, WeightVector(1));
        CHECK(h.rounds.size() == 30);
        CHECK_FALSE(h.rounds[0].gated);
        CHECK(h.rounds[0].rejected.empty());
        for (const auto& e : h.rounds[0].clients) CHECK(e.g_scale == 0.5);
        std::map<int, std::size_t> seen, rejected;
        std::map<int, double> next_scale;
        for (const auto& r : h.rounds) {
            CHECK(r.selected.size() == 5);
            CHECK(r.accepted.size() + r.rejected.size() + r.dropped.size() == r.selected.size());
            CHECK(r.empty_aggregation == r.accepted.empty());
            for (const auto& e : r.clients) {
                if (e.dropped) continue;
                ++seen[e.client_id];
                if (!e.accepted) {
                    ++rejected[e.client_id];
                    CHECK(e.g_value == 0.0);
                }
                // The g computed in an earlier round scales this round's solve.
                if (next_scale.count(e.client_id)) CHECK(e.g_scale == next_scale[e.client_id]);
                next_scale[e.client_id] = e.g_value;
            }
            CHECK(r.telemetry.n0 >= 0.0);
            CHECK(r.telemetry.n0 <= 1.0);
        }
        for (const auto& c : h.clients) {
            CHECK(c.n0 >= 0.0);
            CHECK(c.n0 <= 1.0);
            CHECK(c.participations == seen[c.client_id]);
            CHECK(c.rejections == rejected[c.client_id]);
            if (c.participations) CHECK(c.n0 == doctest::Approx(static_cast<double>(c.rejections) / c.participations));
        }
    }

    TEST_CASE("rejected updates never enter the aggregate") {
        SyntheticProblem p;
        p.clients = 10;
        p.corrupted_clients = 3;
        p.seed = 21;
        const auto fleet = generate_fleet(p);
        auto cfg = base_config(Algorithm::gfedprox, 10, 10, 8);
        cfg.solve = {10, 0.1, 32, 0.05, 0};
        // Recompute every aggregate from the per-client solves.
        std::vector<WeightVector> prev{WeightVector(1)};
        const auto h = run(cfg, fleet.clients, WeightVector(1), [&](const RoundReport& r) {
            if (r.empty_aggregation) {
                CHECK(r.global_weights == prev.back());
            } else {
                std::vector<WeightedUpdate> ups;
                for (const auto& e : r.clients) {
                    if (!e.accepted || e.dropped) continue;
                    LocalSolveConfig s = cfg.solve;
                    s.epochs = e.epochs;
                    s.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(r.round),
                                                    static_cast<std::uint64_t>(e.client_id), 3});
                    ups.push_back({prox_local(prev.back(), fleet.clients[e.client_id], s, e.g_scale), 1});
                }
                CHECK(aggregate(ups, AggregationWeighting::uniform) == r.global_weights);
            }
            prev.push_back(r.global_weights);
        });
        CHECK(h.rounds.size() == 8);
    }

    TEST_CASE("never selected clients are flagged") {
        const auto clients = iid_fleet(5, 20, 7);
        auto cfg = base_config(Algorithm::fedprox, 5, 2, 10);
        cfg.sampling_probs = {0.5, 0.5, 0.0, 0.0, 0.0};
        const auto h = run(cfg, clients, WeightVector(1));
        for (int k = 2; k < 5; ++k) {
            CHECK(h.clients[k].never_participated);
            CHECK(h.clients[k].n0 == 0.0);
            CHECK(h.clients[k].participations == 0);
        }
        CHECK_FALSE(h.clients[0].never_participated);
    }

    TEST_CASE("fedavg drops stragglers, the proximal methods keep them") {
        const auto clients = iid_fleet(10, 20, 8);
        auto avg = base_config(Algorithm::fedavg, 10, 10, 5);
        avg.straggler_fraction = 0.5;
        const auto h = run(avg, clients, WeightVector(1));
        std::size_t dropped = 0;
        for (const auto& r : h.rounds) {
            dropped += r.dropped.size();
            for (const auto& e : r.clients) CHECK(e.dropped == e.straggler);
        }
        CHECK(dropped > 0);
        auto prox = avg;
        prox.algorithm = Algorithm::fedprox;
        prox.straggler_policy = default_straggler_policy(Algorithm::fedprox);
        for (const auto& r : run(prox, clients, WeightVector(1)).rounds) CHECK(r.dropped.empty());
    }

    TEST_CASE("validation lists every problem") {
        auto cfg = base_config(Algorithm::fedprox, 5, 6, 0);
        cfg.solve.epochs = 0;
        cfg.straggler_fraction = 1.5;
        const auto errs = validation_errors(cfg);
        CHECK(errs.size() >= 4);
        CHECK_THROWS_AS(validate(cfg), ConfigError);
        CHECK(validation_errors(base_config(Algorithm::fedprox, 5, 2, 1)).empty());
    }

    TEST_CASE("input checks") {
        auto clients = iid_fleet(4, 10, 9);
        const auto cfg = base_config(Algorithm::fedprox, 4, 2, 2);
        CHECK_THROWS_AS(run(cfg, iid_fleet(3, 10, 9), WeightVector(1)), ConfigError);
        CHECK_THROWS_AS(run(cfg, clients, WeightVector(2)), ConfigError);
        clients[1].client_id = 0;
        CHECK_THROWS_AS(run(cfg, clients, WeightVector(1)), ConfigError);
    }

    TEST_CASE("divergence reports round and client") {
        const auto clients = iid_fleet(4, 10, 10);
        auto cfg = base_config(Algorithm::fedavg, 4, 2, 3);
        cfg.solve.learning_rate = 1e100;
        try {
            run(cfg, clients, WeightVector(1));
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("round 0") != std::string::npos);
            CHECK(msg.find("client") != std::string::npos);
        }
    }

    TEST_CASE("corrupted clients accumulate higher n0") {
        SyntheticProblem p;
        p.corrupted_clients = 4;
        p.seed = 1000;
        const auto fleet = generate_fleet(p);
        auto cfg = base_config(Algorithm::gfedprox, 20, 10, 50);
        cfg.solve = {20, 0.1, 32, 0.05, 0};
        cfg.seed = 77;
        const auto h = run(cfg, fleet.clients, WeightVector(1));
        double bad = 0, good = 0;
        for (const auto& c : h.clients) {
            const bool corrupted = std::binary_search(fleet.corrupted_ids.begin(), fleet.corrupted_ids.end(), c.client_id);
            (corrupted ? bad : good) += c.n0;
        }
        CHECK(bad / 4 > good / 16);
    }
}

TEST_SUITE("synthetic") {
    TEST_CASE("fleet is reproducible and corrupted ids are sorted") {
        SyntheticProblem p;
        p.corrupted_clients = 5;
        p.seed = 3;
        const auto a = generate_fleet(p), b = generate_fleet(p);
        CHECK(a.corrupted_ids == b.corrupted_ids);
        CHECK(a.corrupted_ids.size() == 5);
        CHECK(std::is_sorted(a.corrupted_ids.begin(), a.corrupted_ids.end()));
        CHECK(a.clients[7].targets == b.clients[7].targets);
        CHECK(a.clean_optimum[0] == doctest::Approx(2.0).epsilon(0.05));
        CHECK(a.clean_optimum.bias() == doctest::Approx(1.0).epsilon(0.05));
        const int bad = a.corrupted_ids[0];
        double mean = 0;
        for (double y : a.clients[bad].targets) mean += y;
        CHECK(mean / a.clients[bad].n_k() > 40.0);
    }
}
