#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedgate/dataset.hpp"
#include "fedgate/model.hpp"

namespace fedgate {

/// Linear fleet y = slope*x + intercept + N(0, noise_std^2), x ~ U(x_min, x_max).
/// `corrupted_clients` devices, chosen by seed, have every target shifted by
/// `corruption_shift`.
struct SyntheticProblem {
    std::size_t clients = 20;
    std::size_t samples_per_client = 100;
    double slope = 2.0;
    double intercept = 1.0;
    double noise_std = 0.5;
    double x_min = -1.0;
    double x_max = 1.0;
    std::size_t corrupted_clients = 0;
    double corruption_shift = 50.0;
    std::uint64_t seed = 0;

    friend bool operator==(const SyntheticProblem&, const SyntheticProblem&) = default;
};

struct SyntheticFleet {
    std::vector<ClientDataset> clients;
    std::vector<int> corrupted_ids;  // ascending
    WeightVector clean_optimum;      // pooled least squares over uncorrupted clients
};

SyntheticFleet generate_fleet(const SyntheticProblem& problem);

/// Pooled least squares over the given single-feature clients.
WeightVector pooled_least_squares(const std::vector<ClientDataset>& clients);

}  // namespace fedgate
