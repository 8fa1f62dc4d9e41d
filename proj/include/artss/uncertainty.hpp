#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "artss/latent_store.hpp"

namespace artss::uncertainty {

using latent::kSigmaFloor;

// log(kSigmaFloor^2): the log-variance head is clamped here inside the loss.
double min_log_variance();

struct FitConfig {
    std::size_t max_iterations = 2000;
    double tolerance = 1e-12;  // stop when the NLL improves by less than this
};

// Heteroscedastic linear regression: mean head W [1, x] and log-variance head
// a^T [1, x], one variance per sample shared by all output coordinates.
// Per-sample loss: |y - W[1,x]|^2 / (2 p sigma^2) + (1/2) log sigma^2.
struct HeteroscedasticFit {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    Eigen::MatrixXd mean_weights;    // output_dim x (input_dim + 1), column 0 is the bias
    Eigen::VectorXd logvar_weights;  // input_dim + 1, entry 0 is the bias
    std::vector<double> nll_trace;   // one entry per iteration, starting at initialization

    Eigen::VectorXd predict_mean(std::span<const double> input) const;
    double predict_log_variance(std::span<const double> input) const;
};

// Design matrix [1, x] rows and target rows for a data set.
struct Problem {
    Eigen::MatrixXd design;   // N x (d + 1)
    Eigen::MatrixXd targets;  // N x p
};

Problem make_problem(std::span<const std::vector<double>> inputs,
                     std::span<const std::vector<double>> targets);

// Flat parameter vector: column-major mean_weights followed by logvar_weights.
Eigen::VectorXd pack(const HeteroscedasticFit& fit);
void unpack(const Eigen::VectorXd& params, HeteroscedasticFit& fit);

// Mean per-sample NLL at `params`; fills `grad` when non-null.
double heteroscedastic_nll(const Eigen::VectorXd& params, const Problem& problem,
                           Eigen::VectorXd* grad = nullptr);

// Throws EmptyData, DimensionMismatch, NonFiniteLoss.
HeteroscedasticFit fit_heteroscedastic(std::span<const std::vector<double>> inputs,
                                       std::span<const std::vector<double>> targets,
                                       const FitConfig& config = {});

// sigma = exp(logvar / 2), clamped at kSigmaFloor. Throws DimensionMismatch.
double predict_sigma(const HeteroscedasticFit& fit, std::span<const double> input);
double predict_sigma(const HeteroscedasticFit& fit, const latent::LatentVector& input);

struct SigmaValidation {
    latent::SampleSet samples;
    std::vector<std::string> warnings;
};

inline constexpr double kSuspectSigma = 1e6;

// Validates sigma values produced outside this library: non-positive values
// are clamped to the floor with a warning, values above kSuspectSigma are
// kept but flagged. Non-finite sigma throws MalformedRow.
SigmaValidation validate_external_sigma(std::span<const latent::SampleRecord> records);

}  // namespace artss::uncertainty
