#pragma once

// Gaussian mixture of linear regressions in a 1-d input:
//   f(x, y | theta) = sum_k pi_k N(x; mu_k, v_k) N(y; b0_k + b1_k x, t_k)
//   f(x | theta)    = sum_k pi_k N(x; mu_k, v_k)
// fitted by EM on labeled pairs, unlabeled inputs, or both.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "artss/rng.hpp"

namespace artss::lab {

struct Observation {
    double x = 0.0;
    double y = 0.0;
};

struct Component {
    double weight = 1.0;
    double x_mean = 0.0;
    double x_var = 1.0;
    double intercept = 0.0;
    double slope = 0.0;
    double noise_var = 1.0;

    double predict(double x) const { return intercept + slope * x; }
};

enum class Regime { Supervised, Unsupervised, SemiSupervised };
const char* to_string(Regime regime);

struct ModelSpec {
    std::size_t components = 1;
    // Informational: true when the family cannot represent the law the data
    // were drawn from (fewer components than the pooled generator has).
    bool misspecified = false;
};

struct EmConfig {
    std::size_t restarts = 5;
    std::size_t max_iterations = 1000;
    double tolerance = 1e-10;       // on the per-observation log-likelihood
    double variance_floor = 1e-8;   // hitting it marks the restart degenerate
    std::uint64_t seed = 0;
};

class FittedModel {
public:
    FittedModel() = default;
    FittedModel(std::vector<Component> components, Regime regime, double lambda);

    const std::vector<Component>& components() const noexcept { return components_; }
    std::size_t size() const noexcept { return components_.size(); }
    Regime regime() const noexcept { return regime_; }
    double lambda() const noexcept { return lambda_; }  // labeled fraction N_l / (N_l + N_u)

    // Per-iteration mean log-likelihood, lambda * E_l[log f(x,y)] +
    // (1 - lambda) * E_u[log f(x)], of the winning restart.
    const std::vector<double>& loglik_trace() const noexcept { return trace_; }
    void set_trace(std::vector<double> trace) { trace_ = std::move(trace); }

    double log_density_joint(double x, double y) const;
    double log_density_marginal(double x) const;
    // Posterior component probabilities given x alone.
    std::vector<double> responsibilities(double x) const;
    // E[y | x] under the model.
    double predict(double x) const;

    Observation sample(Rng& rng) const;

private:
    std::vector<Component> components_;
    Regime regime_ = Regime::Supervised;
    double lambda_ = 1.0;
    std::vector<double> trace_;
};

// Components sorted by ascending x_mean (label-switching canonical form).
std::vector<Component> canonical_order(std::vector<Component> components);

// Per component, in canonical order: [pi, mu, log v, b0, b1, log t].
std::vector<double> canonical_vector(const FittedModel& model);
std::vector<double> canonical_vector(std::span<const Component> components);
// The x-marginal block only: [pi, mu, log v] per component.
std::vector<double> marginal_vector(const FittedModel& model);

enum class Block { Full, Marginal };
// Euclidean distance between canonical vectors (variances in log scale).
// Throws InvalidArgument when component counts differ.
double parameter_distance(const FittedModel& a, const FittedModel& b, Block block = Block::Full);

// Throws EmptyData when there is nothing to fit, InvalidArgument for K == 0,
// DegenerateComponent when every restart collapses.
FittedModel supervised_mle(std::span<const Observation> labeled, const ModelSpec& spec,
                           const EmConfig& config = {});
// Regression coefficients are unidentified from inputs alone; they are
// reported as intercept 0, slope 0, noise variance 1.
FittedModel unsupervised_mle(std::span<const double> unlabeled, const ModelSpec& spec,
                             const EmConfig& config = {});
// Maximizes the convex combination of supervised and unsupervised mean
// log-likelihoods with lambda = N_l / (N_l + N_u). N_u = 0 reproduces
// supervised_mle and N_l = 0 reproduces unsupervised_mle bit for bit.
FittedModel semi_supervised_mle(std::span<const Observation> labeled,
                                std::span<const double> unlabeled, const ModelSpec& spec,
                                const EmConfig& config = {});

}  // namespace artss::lab
