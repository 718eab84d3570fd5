#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedgate/dataset.hpp"

namespace fedgate {

/// Linear model parameters: `dim` coefficients followed by the bias.
/// The bias is an ordinary coordinate for norms, statistics and gating.
class WeightVector {
public:
    WeightVector() = default;
    explicit WeightVector(std::size_t dim) : params_(dim + 1, 0.0) {}
    WeightVector(std::vector<double> coefficients, double bias);

    /// Builds from the augmented layout [c_0, ..., c_{d-1}, bias].
    static WeightVector from_flat(std::vector<double> flat);

    std::size_t dim() const noexcept { return params_.empty() ? 0 : params_.size() - 1; }
    std::size_t size() const noexcept { return params_.size(); }

    std::span<const double> coefficients() const { return {params_.data(), dim()}; }
    double bias() const { return params_.back(); }
    std::span<const double> flat() const noexcept { return params_; }
    std::span<double> flat() noexcept { return params_; }

    double operator[](std::size_t j) const { return params_[j]; }
    double& operator[](std::size_t j) { return params_[j]; }

    bool all_finite() const;

    friend bool operator==(const WeightVector&, const WeightVector&) = default;

private:
    std::vector<double> params_;
};

double distance(const WeightVector& a, const WeightVector& b);
double norm(std::span<const double> v);

struct LocalSolveConfig {
    int epochs = 1;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    double mu = 0.0;
    std::uint64_t seed = 0;
};

/// Throws ConfigError listing the violated constraint.
void validate(const LocalSolveConfig& cfg);

/// Loss/gradient pair the local solvers run on. Implementations must be pure.
class Objective {
public:
    virtual ~Objective() = default;
    virtual double loss(const WeightVector& w, const ClientDataset& data) const = 0;
    /// Writes the gradient of the mean loss over `rows` into `out` (size w.size()).
    virtual void batch_gradient(const WeightVector& w, const ClientDataset& data, std::span<const std::size_t> rows,
                                std::span<double> out) const = 0;
};

/// Mean squared error of a linear model.
const Objective& linear_mse();

double predict(const WeightVector& w, std::span<const double> x);

/// (1/n_k) sum (predict(w, x_i) - y_i)^2.
double local_loss(const WeightVector& w, const ClientDataset& data);

/// Exact full-batch gradient of local_loss.
std::vector<double> gradient(const WeightVector& w, const ClientDataset& data);

/// E epochs of mini-batch SGD on the local loss; a seeded reshuffle per epoch.
WeightVector sgd_local(const WeightVector& w0, const ClientDataset& data, const LocalSolveConfig& cfg,
                       const Objective& objective = linear_mse());

/// Mini-batch SGD on F_k(w) + g_scale * mu * ||w - w0||^2.
/// g_scale = 1/2 is the classic FedProx surrogate F_k(w) + (mu/2)||w - w0||^2.
/// The quadratic term is applied as an exact proximal step after each
/// gradient step on F_k, so large mu cannot destabilise the iteration.
WeightVector prox_local(const WeightVector& w0, const ClientDataset& data, const LocalSolveConfig& cfg,
                        double g_scale, const Objective& objective = linear_mse());

/// Full-batch gradient of the surrogate: grad F_k(w) + 2*g_scale*mu*(w - anchor).
std::vector<double> surrogate_gradient(const WeightVector& w, const WeightVector& anchor, const ClientDataset& data,
                                       double mu, double g_scale, const Objective& objective = linear_mse());

double surrogate_loss(const WeightVector& w, const WeightVector& anchor, const ClientDataset& data, double mu,
                      double g_scale, const Objective& objective = linear_mse());

struct InexactnessReport {
    double beta = 0.0;
    double grad_norm_at_solution = 0.0;
    double grad_norm_at_start = 0.0;
    bool already_stationary = false;  // start gradient was exactly zero
};

InexactnessReport measure_inexactness(const WeightVector& w_star, const WeightVector& w0, const ClientDataset& data,
                                      double mu, double g_scale, const Objective& objective = linear_mse());

/// Closed-form ordinary least squares of y on x. Throws NumericError if x is constant.
WeightVector fit_least_squares(std::span<const double> x, std::span<const double> y);
WeightVector fit_least_squares(const Dataset& dataset, const std::string& x_col, const std::string& y_col);

}  // namespace fedgate
