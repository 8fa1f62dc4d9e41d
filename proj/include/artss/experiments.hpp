#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "artss/degradation_lab.hpp"
#include "artss/run_report.hpp"

namespace artss::lab {

// Shared knobs. Trial t draws everything from derive_seed(seed, <experiment>, t);
// the large-sample limits use their own streams.
struct CommonConfig {
    std::uint64_t seed = 1;
    std::size_t components = 1;
    double shift = -1.5;
    std::size_t limit_factor = 10;  // limits are fitted on limit_factor x the largest sample
    EmConfig em;
};

// Semi-supervised fits approach the unsupervised limit as N_u grows with N_l
// fixed. Labeled pairs come from the source law, unlabeled inputs from the
// target law (in-distribution when shift = 0).
struct LemmaConfig {
    CommonConfig common;
    std::size_t n_labeled = 20;
    std::vector<std::size_t> schedule{0, 100, 1000, 10000};
    std::size_t seeds = 20;
    // Only the x-marginal block is identified by unlabeled data, so the
    // distance to the unsupervised limit is measured on that block by default.
    Block block = Block::Marginal;
};

RunReport run_lemma_experiment(const LemmaConfig& config, std::size_t jobs = 1);

// Labeled-only vs. semi-supervised task error, trial by trial, plus the same
// comparison for a correctly specified family fed in-distribution inputs.
struct Corollary1Config {
    CommonConfig common{.seed = 1, .components = 2, .shift = -1.5, .limit_factor = 10, .em = {}};
    std::size_t n_labeled = 20;
    std::size_t n_unlabeled = 2000;
    std::size_t trials = 200;
    std::size_t n_eval = 20000;
    std::size_t n_mc = 20000;
    bool control = true;
};

RunReport run_corollary1_experiment(const Corollary1Config& config, std::size_t jobs = 1);

enum class Selector { ArtSS, Oracle };
const char* to_string(Selector s);

// Three arms per trial: no unlabeled data, the whole mixed pool, and only
// the accepted subset. Distances are to the supervised limit.
struct Corollary2Config {
    CommonConfig common{.seed = 1, .components = 2, .shift = 4.0, .limit_factor = 10, .em = {}};
    std::size_t n_labeled = 40;
    std::size_t n_unlabeled = 1000;
    double source_fraction = 0.5;  // share of the pool drawn from the source law
    std::size_t trials = 50;
    std::size_t m_nn = 8;
    Selector selector = Selector::ArtSS;
};

RunReport run_corollary2_experiment(const Corollary2Config& config, std::size_t jobs = 1);

// Bias/variance of the canonical parameter vector around the supervised
// limit, labeled-only vs. semi-supervised, across many seeds.
struct BiasVarianceConfig {
    CommonConfig common;
    std::size_t n_labeled = 20;
    std::size_t n_unlabeled = 2000;
    std::size_t trials = 100;
};

RunReport run_bias_variance_experiment(const BiasVarianceConfig& config, std::size_t jobs = 1);

// Latent used by the rejection rule inside the lab: [1, x, r_1..r_K] with r
// the responsibilities of `reference` at x.
std::vector<double> lab_latent(const FittedModel& reference, double x);
// Inputs for the lab's uncertainty head: [r_1..r_{K-1}, x r_1..x r_K], rich
// enough for its mean head to express the mixture's posterior-mean prediction.
std::vector<double> lab_sigma_features(const FittedModel& reference, double x);

}  // namespace artss::lab
