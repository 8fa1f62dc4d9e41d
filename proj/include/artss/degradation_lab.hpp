#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "artss/mixture_regression.hpp"

namespace artss::lab {

enum class Domain { Source, Target };

// Ground-truth law. `target` equals `source` except that the last component's
// input mean and intercept are moved by `shift`; shift = 0 gives
// in-distribution unlabeled data.
struct Generator {
    std::vector<Component> source;
    std::vector<Component> target;
    double shift = 0.0;
    std::uint64_t seed = 0;

    const std::vector<Component>& law(Domain d) const { return d == Domain::Source ? source : target; }
    std::size_t true_components() const { return source.size(); }
    // E[tau^2] under the source law.
    double irreducible_error() const;
    // Error of the posterior-mean predictor under the source law: E[tau^2]
    // plus the spread of the component lines where components overlap.
    // Computed by quadrature.
    double bayes_error() const;
};

// Default two-component source law: well separated inputs (means -1 and +1,
// sd 0.5), lines y = x and y = -x crossing at the origin, noise sd 0.2 and
// 0.4.
std::vector<Component> default_source_law();
Generator make_generator(double shift, std::uint64_t seed);
Generator make_generator(std::vector<Component> source, double shift, std::uint64_t seed);

std::vector<Observation> draw_labeled(std::span<const Component> law, std::size_t n, Rng& rng);
std::vector<double> draw_inputs(std::span<const Component> law, std::size_t n, Rng& rng);

struct DataDraw {
    std::vector<Observation> labeled;
    std::vector<double> unlabeled;
};

// i.i.d. draws from one domain; `stream` separates independent draws under
// the same generator seed.
DataDraw sample_data(const Generator& gen, std::size_t n_labeled, std::size_t n_unlabeled,
                     Domain pool, std::uint64_t stream = 0);

struct MonteCarloEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

inline constexpr std::uint64_t kDefaultEvalSeed = 0x5eed0e7a1ULL;

// Mean squared error of the posterior-mean prediction over n_eval fresh
// source-law draws taken from a fixed evaluation stream.
MonteCarloEstimate regression_error(const FittedModel& model, const Generator& gen,
                                    std::size_t n_eval, std::uint64_t eval_seed = kDefaultEvalSeed);
MonteCarloEstimate regression_error(const FittedModel& model, std::span<const Observation> eval);

// KL(N(m1, v1) || N(m2, v2)).
double gaussian_kl(double mean_p, double var_p, double mean_q, double var_q);

// KL(p || q) of the joint (x, y) densities. Single-component pairs use the
// closed form (standard error 0); mixtures use n_mc seeded draws from p.
MonteCarloEstimate kl_divergence(const FittedModel& p, const FittedModel& q, std::size_t n_mc,
                                 std::uint64_t seed = kDefaultEvalSeed);

struct MseDecomposition {
    double bias_sq = 0.0;
    double variance = 0.0;
    double mse = 0.0;  // mean squared distance to the reference; = bias_sq + variance
};

// Sample bias/variance split of parameter estimates around `reference`,
// using population (1/n) moments so the identity holds exactly.
// Throws TooFewFits (< 2 estimates), InvalidArgument on length mismatch.
MseDecomposition mse_decomposition(std::span<const std::vector<double>> estimates,
                                   std::span<const double> reference);
MseDecomposition mse_decomposition(std::span<const FittedModel> fits,
                                   std::span<const double> reference);

}  // namespace artss::lab
