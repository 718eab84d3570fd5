#include "fedgate/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fedgate/error.hpp"
#include "fedgate/rng.hpp"

namespace fedgate {

WeightVector::WeightVector(std::vector<double> coefficients, double bias) : params_(std::move(coefficients)) {
    params_.push_back(bias);
}

WeightVector WeightVector::from_flat(std::vector<double> flat) {
    if (flat.empty()) throw ConfigError("weight vector needs at least the bias coordinate");
    WeightVector w;
    w.params_ = std::move(flat);
    return w;
}

bool WeightVector::all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double distance(const WeightVector& a, const WeightVector& b) {
    if (a.size() != b.size()) throw ConfigError("distance between weight vectors of different size");
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
}

void validate(const LocalSolveConfig& cfg) {
    std::vector<std::string> problems;
    if (cfg.epochs < 1) problems.push_back(fmt::format("epochs must be >= 1 (got {})", cfg.epochs));
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
        problems.push_back(fmt::format("learning_rate must be > 0 (got {})", cfg.learning_rate));
    }
    if (cfg.batch_size < 1) problems.push_back("batch_size must be >= 1");
    if (!(cfg.mu >= 0.0) || !std::isfinite(cfg.mu)) problems.push_back(fmt::format("mu must be >= 0 (got {})", cfg.mu));
    if (!problems.empty()) throw ConfigError(fmt::format("{}", fmt::join(problems, "; ")));
}

namespace {

void require_data(const ClientDataset& data) {
    if (data.n_k() == 0) throw DataError(fmt::format("client {} has no samples", data.client_id));
    if (data.features.size() != data.n_k() * data.dim) {
        throw DataError(fmt::format("client {}: feature matrix does not match {} samples", data.client_id, data.n_k()));
    }
}

void require_dim(const WeightVector& w, const ClientDataset& data) {
    if (w.dim() != data.dim) {
        throw ConfigError(fmt::format("model has {} coefficients, client {} has {} features", w.dim(), data.client_id,
                                      data.dim));
    }
}

class LinearMse final : public Objective {
public:
    double loss(const WeightVector& w, const ClientDataset& data) const override {
        require_data(data);
        require_dim(w, data);
        double s = 0.0;
        for (std::size_t i = 0; i < data.n_k(); ++i) {
            const double r = predict(w, data.x(i)) - data.targets[i];
            s += r * r;
        }
        return s / static_cast<double>(data.n_k());
    }

    void batch_gradient(const WeightVector& w, const ClientDataset& data, std::span<const std::size_t> rows,
                        std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
        const std::size_t d = data.dim;
        for (auto i : rows) {
            const auto x = data.x(i);
            const double r = predict(w, x) - data.targets[i];
            for (std::size_t j = 0; j < d; ++j) out[j] += r * x[j];
            out[d] += r;
        }
        const double scale = 2.0 / static_cast<double>(rows.size());
        for (auto& g : out) g *= scale;
    }
};

// Shared by sgd_local and prox_local. A zero proximal coefficient skips the
// term entirely so both entry points take the same floating-point path.
WeightVector run_sgd(const WeightVector& w0, const ClientDataset& data, const LocalSolveConfig& cfg, double prox_coef,
                     const Objective& objective) {
    require_data(data);
    require_dim(w0, data);
    if (cfg.epochs < 1) throw ConfigError(fmt::format("epochs must be >= 1 (got {})", cfg.epochs));
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
        throw ConfigError(fmt::format("learning_rate must be non-negative (got {})", cfg.learning_rate));
    }
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");

    WeightVector w = w0;
    std::vector<double> grad(w.size());
    std::vector<std::size_t> order(data.n_k());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, {0x5ed}));
    const std::size_t batch = std::min(cfg.batch_size, data.n_k());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t len = std::min(batch, order.size() - start);
            objective.batch_gradient(w, data, std::span(order).subspan(start, len), grad);
            if (prox_coef == 0.0) {
                for (std::size_t j = 0; j < w.size(); ++j) w[j] -= cfg.learning_rate * grad[j];
            } else {
                // Gradient step on F, exact step on the quadratic: stable for any mu
                // and stationary exactly where the surrogate gradient vanishes.
                const double shrink = 1.0 + cfg.learning_rate * prox_coef;
                for (std::size_t j = 0; j < w.size(); ++j) {
                    w[j] = (w[j] - cfg.learning_rate * grad[j] + cfg.learning_rate * prox_coef * w0[j]) / shrink;
                }
            }
        }
        if (!w.all_finite()) {
            throw DivergenceError(
                fmt::format("local solver diverged on client {} in epoch {} (learning_rate {}, mu {})",
                            data.client_id, epoch + 1, cfg.learning_rate, cfg.mu),
                epoch + 1);
        }
    }
    return w;
}

}  // namespace

const Objective& linear_mse() {
    static const LinearMse instance;
    return instance;
}

double predict(const WeightVector& w, std::span<const double> x) {
    if (x.size() != w.dim()) {
        throw ConfigError(fmt::format("feature vector has {} entries, model expects {}", x.size(), w.dim()));
    }
    double s = w.bias();
    const auto c = w.coefficients();
    for (std::size_t j = 0; j < x.size(); ++j) s += c[j] * x[j];
    return s;
}

double local_loss(const WeightVector& w, const ClientDataset& data) { return linear_mse().loss(w, data); }

std::vector<double> gradient(const WeightVector& w, const ClientDataset& data) {
    require_data(data);
    require_dim(w, data);
    std::vector<std::size_t> rows(data.n_k());
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> g(w.size());
    linear_mse().batch_gradient(w, data, rows, g);
    return g;
}

WeightVector sgd_local(const WeightVector& w0, const ClientDataset& data, const LocalSolveConfig& cfg,
                       const Objective& objective) {
    return run_sgd(w0, data, cfg, 0.0, objective);
}

WeightVector prox_local(const WeightVector& w0, const ClientDataset& data, const LocalSolveConfig& cfg, double g_scale,
                        const Objective& objective) {
    if (!(g_scale >= 0.0) || !std::isfinite(g_scale)) {
        throw ConfigError(fmt::format("g_scale must be finite and >= 0 (got {})", g_scale));
    }
    if (!(cfg.mu >= 0.0)) throw ConfigError(fmt::format("mu must be >= 0 (got {})", cfg.mu));
    return run_sgd(w0, data, cfg, 2.0 * g_scale * cfg.mu, objective);
}

std::vector<double> surrogate_gradient(const WeightVector& w, const WeightVector& anchor, const ClientDataset& data,
                                       double mu, double g_scale, const Objective& objective) {
    require_data(data);
    require_dim(w, data);
    std::vector<std::size_t> rows(data.n_k());
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> g(w.size());
    objective.batch_gradient(w, data, rows, g);
    const double coef = 2.0 * g_scale * mu;
    for (std::size_t j = 0; j < w.size(); ++j) g[j] += coef * (w[j] - anchor[j]);
    return g;
}

double surrogate_loss(const WeightVector& w, const WeightVector& anchor, const ClientDataset& data, double mu,
                      double g_scale, const Objective& objective) {
    const double d = distance(w, anchor);
    return objective.loss(w, data) + g_scale * mu * d * d;
}

InexactnessReport measure_inexactness(const WeightVector& w_star, const WeightVector& w0, const ClientDataset& data,
                                      double mu, double g_scale, const Objective& objective) {
    InexactnessReport r;
    r.grad_norm_at_solution = norm(surrogate_gradient(w_star, w0, data, mu, g_scale, objective));
    r.grad_norm_at_start = norm(surrogate_gradient(w0, w0, data, mu, g_scale, objective));
    if (r.grad_norm_at_start > 0.0) {
        r.beta = r.grad_norm_at_solution / r.grad_norm_at_start;
    } else {
        r.beta = 0.0;
        r.already_stationary = true;
    }
    return r;
}

WeightVector fit_least_squares(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DataError("least squares: x and y lengths differ");
    if (x.size() < 2) throw NumericError("least squares needs at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw NumericError("least squares: all x values are equal");
    const double slope = sxy / sxx;
    return WeightVector({slope}, my - slope * mx);
}

WeightVector fit_least_squares(const Dataset& dataset, const std::string& x_col, const std::string& y_col) {
    const auto x = dataset.column(x_col);
    const auto y = dataset.column(y_col);
    return fit_least_squares(x, y);
}

}  // namespace fedgate
