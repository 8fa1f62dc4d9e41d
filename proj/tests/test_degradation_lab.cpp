#include <doctest.h>

#include <cmath>
#include <sstream>

#include "artss/degradation_lab.hpp"
#include "artss/experiments.hpp"
#include "support.hpp"

using namespace artss;
using namespace artss::lab;

namespace {

// Log joint density written out independently of FittedModel.
double brute_log_joint(const std::vector<Component>& law, double x, double y) {
    double p = 0.0;
    for (const auto& c : law) {
        const double dx = x - c.x_mean, dy = y - c.intercept - c.slope * x;
        p += c.weight * std::exp(-0.5 * dx * dx / c.x_var) / std::sqrt(2 * M_PI * c.x_var) *
             std::exp(-0.5 * dy * dy / c.noise_var) / std::sqrt(2 * M_PI * c.noise_var);
    }
    return std::log(p);
}

}  // namespace

TEST_CASE("sample_data basics") {
    const auto gen = make_generator(1.0, 42);
    const auto empty = sample_data(gen, 0, 0, Domain::Source);
    CHECK(empty.labeled.empty());
    CHECK(empty.unlabeled.empty());
    const auto a = sample_data(gen, 10, 10, Domain::Target, 3);
    const auto b = sample_data(gen, 10, 10, Domain::Target, 3);
    const auto c = sample_data(gen, 10, 10, Domain::Target, 4);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(a.labeled[i].x == b.labeled[i].x);
        CHECK(a.labeled[i].y == b.labeled[i].y);
        CHECK(a.unlabeled[i] == b.unlabeled[i]);
    }
    CHECK(a.unlabeled[0] != c.unlabeled[0]);
    CHECK(gen.target.back().x_mean == gen.source.back().x_mean + 1.0);
    CHECK(gen.target.back().intercept == gen.source.back().intercept + 1.0);
    CHECK(gen.target.front().x_mean == gen.source.front().x_mean);
}

TEST_CASE("draws match the analytic moments of the law") {
    for (double shift : {0.0, 2.5}) {
        const auto gen = make_generator(shift, 9);
        const auto& law = gen.target;
        const auto d = sample_data(gen, 100000, 0, Domain::Target);
        double ex = 0, ex2 = 0, ey = 0, ey2 = 0;
        for (const auto& c : law) {
            const double m = c.intercept + c.slope * c.x_mean;
            ex += c.weight * c.x_mean;
            ex2 += c.weight * (c.x_var + c.x_mean * c.x_mean);
            ey += c.weight * m;
            ey2 += c.weight * (c.noise_var + c.slope * c.slope * c.x_var + m * m);
        }
        double sx = 0, sy = 0;
        for (const auto& o : d.labeled) {
            sx += o.x;
            sy += o.y;
        }
        const double n = 1e5;
        CHECK(std::abs(sx / n - ex) < 3.0 * std::sqrt((ex2 - ex * ex) / n));
        CHECK(std::abs(sy / n - ey) < 3.0 * std::sqrt((ey2 - ey * ey) / n));
    }
}

TEST_CASE("generator validation") {
    CHECK(code_of([] { make_generator({}, 0.0, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { make_generator({{0.5, 0, 1, 0, 0, 1}}, 0.0, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { make_generator({{1.0, 0, 0, 0, 0, 1}}, 0.0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("regression error of the true law sits at the Bayes error") {
    const auto gen = make_generator(0.0, 1);
    const FittedModel truth(gen.source, Regime::Supervised, 1.0);
    const auto l = regression_error(truth, gen, 200000);
    CHECK(std::abs(l.value - gen.bayes_error()) < 3.0 * l.standard_error);
    CHECK(gen.irreducible_error() == doctest::Approx(0.1));
    // Overlap between the components adds only a little on top of E[tau^2].
    CHECK(gen.bayes_error() >= gen.irreducible_error());
    CHECK(gen.bayes_error() < 1.1 * gen.irreducible_error());
}

TEST_CASE("regression error edge cases") {
    const std::vector<Component> noiseless{{1.0, 0.0, 1.0, 0.5, 2.0, 1e-300}};
    Rng rng(1);
    std::vector<Observation> eval(100);
    for (auto& o : eval) {
        o.x = rng.normal();
        o.y = 0.5 + 2.0 * o.x;
    }
    const FittedModel perfect(noiseless, Regime::Supervised, 1.0);
    CHECK(regression_error(perfect, eval).value == 0.0);
    const FittedModel wrong({{1.0, 0.0, 1.0, -3.0, 0.0, 1.0}}, Regime::Supervised, 1.0);
    CHECK(regression_error(wrong, eval).value > 0.0);
}

TEST_CASE("closed form KL") {
    const FittedModel p({{1.0, 0.0, 1.0, 0.3, -0.2, 0.5}}, Regime::Supervised, 1.0);
    CHECK(kl_divergence(p, p, 0).value == 0.0);
    CHECK(gaussian_kl(0.0, 1.0, 1.0, 1.0) == 0.5);
    const FittedModel a({{1.0, 0.0, 1.0, 0.0, 0.0, 1.0}}, Regime::Supervised, 1.0);
    const FittedModel b({{1.0, 1.0, 1.0, 0.0, 0.0, 1.0}}, Regime::Supervised, 1.0);
    CHECK(kl_divergence(a, b, 0).value == 0.5);
}

TEST_CASE("closed form KL agrees with Monte Carlo for single components") {
    const FittedModel p({{1.0, 0.3, 0.7, 0.5, 1.0, 0.2}}, Regime::Supervised, 1.0);
    const FittedModel q({{1.0, -0.1, 1.1, 0.2, 0.6, 0.4}}, Regime::Supervised, 1.0);
    const double exact = kl_divergence(p, q, 0).value;
    Rng rng(4);
    double sum = 0.0, sumsq = 0.0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        const auto o = p.sample(rng);
        const double v = p.log_density_joint(o.x, o.y) - q.log_density_joint(o.x, o.y);
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n, se = std::sqrt((sumsq / n - mean * mean) / n);
    CHECK(std::abs(mean - exact) < 3.0 * se);
}

TEST_CASE("mixture KL matches a large brute-force estimate") {
    const auto law_p = default_source_law();
    auto law_q = law_p;
    law_q[0].x_mean += 0.4;
    law_q[1].slope = -0.5;
    law_q[1].noise_var = 0.3;
    const FittedModel p(law_p, Regime::Supervised, 1.0), q(law_q, Regime::Supervised, 1.0);
    const auto est = kl_divergence(p, q, 20000, 77);
    CHECK(est.standard_error > 0.0);

    Rng rng(derive_seed(12345, "brute-kl"));
    const int n = 1000000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto o = draw_labeled(law_p, 1, rng).front();
        const double v = brute_log_joint(law_p, o.x, o.y) - brute_log_joint(law_q, o.x, o.y);
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n, se = std::sqrt((sumsq / n - mean * mean) / n);
    CHECK(std::abs(est.value - mean) < 3.0 * std::sqrt(est.standard_error * est.standard_error + se * se));
}

TEST_CASE("Monte Carlo KL is non-negative up to noise") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto law_q = default_source_law();
        law_q[0].x_mean += rng.normal(0, 0.3);
        law_q[1].intercept += rng.normal(0, 0.3);
        const FittedModel p(default_source_law(), Regime::Supervised, 1.0);
        const FittedModel q(law_q, Regime::Supervised, 1.0);
        const auto est = kl_divergence(p, q, 5000, static_cast<std::uint64_t>(trial));
        CHECK(est.value >= -3.0 * est.standard_error);
        CHECK(kl_divergence(p, p, 5000, 1).value == 0.0);
    }
}

TEST_CASE("mse decomposition") {
    const std::vector<double> ref{1.0, -2.0, 0.5};
    const std::vector<std::vector<double>> same(4, ref);
    const auto zero = mse_decomposition(same, ref);
    CHECK(zero.bias_sq == 0.0);
    CHECK(zero.variance == 0.0);

    const double delta = 0.25;
    std::vector<std::vector<double>> pm{{1.0 + delta, -2.0, 0.5}, {1.0 - delta, -2.0, 0.5}};
    const auto split = mse_decomposition(pm, ref);
    CHECK(split.bias_sq == 0.0);
    CHECK(split.variance == doctest::Approx(delta * delta).epsilon(1e-15));

    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t dim = 1 + rng.uniform_index(12);
        std::vector<double> r(dim);
        for (auto& v : r) v = rng.normal(0, 3);
        std::vector<std::vector<double>> est(2 + rng.uniform_index(50), std::vector<double>(dim));
        for (auto& e : est)
            for (auto& v : e) v = rng.normal(1.0, 2.0);
        const auto d = mse_decomposition(est, r);
        CHECK(std::abs(d.bias_sq + d.variance - d.mse) <= 1e-9);
    }
    CHECK(code_of([&] { mse_decomposition(std::vector<std::vector<double>>{ref}, ref); }) == ErrorCode::TooFewFits);
    CHECK(code_of([&] { mse_decomposition(std::vector<std::vector<double>>{ref, {1.0}}, ref); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("lemma experiment shape and endpoints") {
    LemmaConfig cfg;
    cfg.seeds = 3;
    cfg.schedule = {0, 100, 1000};
    const auto report = run_lemma_experiment(cfg);
    CHECK(report.rows.size() == 9);
    CHECK(report.seeds.size() == 3);
    // Specified model with in-distribution inputs: the fit heads to the
    // common limit.
    LemmaConfig spec;
    spec.common.components = 2;
    spec.common.shift = 0.0;
    spec.seeds = 3;
    spec.schedule = {0, 3000};
    const auto r = run_lemma_experiment(spec);
    const auto& steps = r.aggregates["per_n_unlabeled"];
    CHECK(steps[1]["median_dist_sup_limit"].get<double>() < steps[0]["median_dist_sup_limit"].get<double>());
}

TEST_CASE("corollary 1 with no unlabeled data never degrades") {
    Corollary1Config cfg;
    cfg.trials = 10;
    cfg.n_unlabeled = 0;
    cfg.n_eval = 2000;
    cfg.n_mc = 500;
    const auto r = run_corollary1_experiment(cfg);
    CHECK(r.aggregates["misspecified"]["degradation_count"].get<int>() == 0);
    CHECK(r.aggregates["control"]["degradation_count"].get<int>() == 0);
    CHECK(r.aggregates.contains("L_star"));
    CHECK(r.aggregates["misspecified"].contains("wilson_low"));
}

TEST_CASE("corollary 2 oracle arm with an all-shifted pool equals labeled-only") {
    Corollary2Config cfg;
    cfg.trials = 5;
    cfg.source_fraction = 0.0;
    cfg.selector = Selector::Oracle;
    const auto r = run_corollary2_experiment(cfg);
    for (const auto& row : r.rows) {
        CHECK(std::get<std::int64_t>(row[4]) == 0);
        CHECK(std::get<double>(row[8]) == std::get<double>(row[6]));
    }
}

TEST_CASE("experiments are reproducible and job-count independent") {
    Corollary2Config cfg;
    cfg.trials = 6;
    std::ostringstream a, b;
    run_corollary2_experiment(cfg, 1).write_csv(a);
    run_corollary2_experiment(cfg, 3).write_csv(b);
    CHECK(a.str() == b.str());
}

TEST_CASE("experiment argument validation") {
    Corollary1Config c1;
    c1.trials = 0;
    CHECK(code_of([&] { run_corollary1_experiment(c1); }) == ErrorCode::InvalidArgument);
    BiasVarianceConfig bv;
    bv.trials = 1;
    CHECK(code_of([&] { run_bias_variance_experiment(bv); }) == ErrorCode::TooFewFits);
}
