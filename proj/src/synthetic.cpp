#include "fedgate/synthetic.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "fedgate/error.hpp"
#include "fedgate/rng.hpp"

namespace fedgate {

SyntheticFleet generate_fleet(const SyntheticProblem& p) {
    if (p.clients == 0) throw ConfigError("synthetic problem needs at least one client");
    if (p.samples_per_client == 0) throw ConfigError("synthetic problem needs samples_per_client >= 1");
    if (p.corrupted_clients > p.clients) {
        throw ConfigError(fmt::format("{} corrupted clients out of {}", p.corrupted_clients, p.clients));
    }
    if (!(p.x_max > p.x_min)) throw ConfigError("synthetic problem needs x_max > x_min");
    if (!(p.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");

    SyntheticFleet fleet;
    std::vector<int> ids(p.clients);
    std::iota(ids.begin(), ids.end(), 0);
    Rng pick(derive_seed(p.seed, {0xbad}));
    pick.shuffle(std::span(ids));
    fleet.corrupted_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(p.corrupted_clients));
    std::sort(fleet.corrupted_ids.begin(), fleet.corrupted_ids.end());

    std::vector<ClientDataset> clean;
    for (std::size_t c = 0; c < p.clients; ++c) {
        Rng rng(derive_seed(p.seed, {0xda7a, c}));
        ClientDataset cd;
        cd.client_id = static_cast<int>(c);
        cd.dim = 1;
        const bool corrupted =
            std::binary_search(fleet.corrupted_ids.begin(), fleet.corrupted_ids.end(), static_cast<int>(c));
        for (std::size_t i = 0; i < p.samples_per_client; ++i) {
            const double x = p.x_min + (p.x_max - p.x_min) * rng.uniform();
            double y = p.slope * x + p.intercept + rng.normal(0.0, p.noise_std);
            if (corrupted) y += p.corruption_shift;
            cd.features.push_back(x);
            cd.targets.push_back(y);
        }
        if (!corrupted) clean.push_back(cd);
        fleet.clients.push_back(std::move(cd));
    }
    fleet.clean_optimum = clean.empty() ? WeightVector(1) : pooled_least_squares(clean);
    return fleet;
}

WeightVector pooled_least_squares(const std::vector<ClientDataset>& clients) {
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& c : clients) {
        if (c.dim != 1) throw ConfigError("pooled least squares supports one feature");
        x.insert(x.end(), c.features.begin(), c.features.end());
        y.insert(y.end(), c.targets.begin(), c.targets.end());
    }
    return fit_least_squares(x, y);
}

}  // namespace fedgate
