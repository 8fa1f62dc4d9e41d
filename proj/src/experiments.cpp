#include "artss/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "artss/error.hpp"
#include "artss/parallel.hpp"
#include "artss/rejection.hpp"
#include "artss/stats.hpp"
#include "artss/uncertainty.hpp"

namespace artss::lab {

namespace {

Json em_json(const EmConfig& em) {
    return Json{{"restarts", em.restarts},
                {"max_iterations", em.max_iterations},
                {"tolerance", em.tolerance},
                {"variance_floor", em.variance_floor}};
}

Json common_json(const CommonConfig& c) {
    return Json{{"seed", c.seed},
                {"components", c.components},
                {"shift", c.shift},
                {"limit_factor", c.limit_factor},
                {"em", em_json(c.em)}};
}

EmConfig em_for(const CommonConfig& c, std::uint64_t trial_seed) {
    EmConfig em = c.em;
    em.seed = derive_seed(trial_seed, "em");
    return em;
}

ModelSpec spec_for(const CommonConfig& c, const Generator& gen, bool pooled_shift) {
    // Against a shifted pool the effective law has an extra component.
    const std::size_t truth = gen.true_components() + (pooled_shift && gen.shift != 0.0 ? 1 : 0);
    return ModelSpec{c.components, c.components < truth};
}

Json model_json(const FittedModel& m) {
    Json comps = Json::array();
    for (const auto& c : m.components()) {
        comps.push_back(Json{{"weight", c.weight},
                             {"x_mean", c.x_mean},
                             {"x_var", c.x_var},
                             {"intercept", c.intercept},
                             {"slope", c.slope},
                             {"noise_var", c.noise_var}});
    }
    return comps;
}

FittedModel supervised_limit(const CommonConfig& c, const Generator& gen, std::size_t n) {
    Rng rng(derive_seed(c.seed, "limit/supervised"));
    const auto data = draw_labeled(gen.source, n, rng);
    return supervised_mle(data, ModelSpec{c.components, false}, em_for(c, c.seed));
}

FittedModel unsupervised_limit(const CommonConfig& c, const Generator& gen, std::size_t n) {
    Rng rng(derive_seed(c.seed, "limit/unsupervised"));
    const auto data = draw_inputs(gen.target, n, rng);
    return unsupervised_mle(data, ModelSpec{c.components, false}, em_for(c, c.seed));
}

}  // namespace

const char* to_string(Selector s) { return s == Selector::ArtSS ? "artss" : "oracle"; }

std::vector<double> lab_latent(const FittedModel& reference, double x) {
    std::vector<double> z{1.0, x};
    const auto r = reference.responsibilities(x);
    z.insert(z.end(), r.begin(), r.end());
    return z;
}

std::vector<double> lab_sigma_features(const FittedModel& reference, double x) {
    const auto r = reference.responsibilities(x);
    std::vector<double> f(r.begin(), r.end() - 1);
    for (double rk : r) f.push_back(x * rk);
    return f;
}

RunReport run_lemma_experiment(const LemmaConfig& config, std::size_t jobs) {
    if (config.seeds == 0) fail(ErrorCode::InvalidArgument, "lemma experiment needs >= 1 seed");
    if (config.schedule.empty()) fail(ErrorCode::InvalidArgument, "empty N_u schedule");
    const auto& c = config.common;
    const Generator gen = make_generator(c.shift, c.seed);
    const std::size_t max_nu = *std::max_element(config.schedule.begin(), config.schedule.end());
    const FittedModel sup_limit =
        supervised_limit(c, gen, c.limit_factor * (config.n_labeled + max_nu));
    const FittedModel unsup_limit =
        unsupervised_limit(c, gen, c.limit_factor * std::max<std::size_t>(max_nu, config.n_labeled));

    const std::size_t steps = config.schedule.size();
    struct Cell {
        double to_unsup = 0.0, to_sup = 0.0, lambda = 0.0;
    };
    std::vector<Cell> cells(config.seeds * steps);
    std::vector<std::uint64_t> seeds(config.seeds);
    for (std::size_t s = 0; s < config.seeds; ++s) seeds[s] = derive_seed(c.seed, "lemma", s);

    parallel_for(config.seeds, jobs, [&](std::size_t s) {
        Rng labeled_rng(derive_seed(seeds[s], "labeled"));
        Rng unlabeled_rng(derive_seed(seeds[s], "unlabeled"));
        const auto labeled = draw_labeled(gen.source, config.n_labeled, labeled_rng);
        // Nested pools: each N_u reuses the prefix of one large draw.
        const auto pool = draw_inputs(gen.target, max_nu, unlabeled_rng);
        const ModelSpec spec = spec_for(c, gen, true);
        for (std::size_t i = 0; i < steps; ++i) {
            const std::span<const double> unlabeled(pool.data(), config.schedule[i]);
            const FittedModel fit = semi_supervised_mle(labeled, unlabeled, spec, em_for(c, seeds[s]));
            Cell& cell = cells[s * steps + i];
            cell.to_unsup = parameter_distance(fit, unsup_limit, config.block);
            cell.to_sup = parameter_distance(fit, sup_limit, Block::Full);
            cell.lambda = fit.lambda();
        }
    });

    RunReport report;
    report.experiment = "lemma";
    report.config = Json{{"common", common_json(c)},
                         {"n_labeled", config.n_labeled},
                         {"schedule", config.schedule},
                         {"seeds", config.seeds},
                         {"block", config.block == Block::Marginal ? "marginal" : "full"}};
    report.seeds = seeds;
    report.columns = {"seed_index", "seed", "n_labeled", "n_unlabeled", "lambda",
                      "dist_unsup_limit", "dist_sup_limit"};
    Json per_step = Json::array();
    std::vector<double> medians;
    for (std::size_t i = 0; i < steps; ++i) {
        std::vector<double> to_unsup, to_sup;
        for (std::size_t s = 0; s < config.seeds; ++s) {
            to_unsup.push_back(cells[s * steps + i].to_unsup);
            to_sup.push_back(cells[s * steps + i].to_sup);
        }
        medians.push_back(stats::median(to_unsup));
        per_step.push_back(Json{{"n_unlabeled", config.schedule[i]},
                                {"median_dist_unsup_limit", medians.back()},
                                {"median_dist_sup_limit", stats::median(to_sup)}});
    }
    for (std::size_t s = 0; s < config.seeds; ++s) {
        for (std::size_t i = 0; i < steps; ++i) {
            const Cell& cell = cells[s * steps + i];
            report.add_row({static_cast<std::int64_t>(s), std::to_string(seeds[s]),
                            static_cast<std::int64_t>(config.n_labeled),
                            static_cast<std::int64_t>(config.schedule[i]), cell.lambda,
                            cell.to_unsup, cell.to_sup});
        }
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < steps; ++i) decreasing = decreasing && medians[i] < medians[i - 1];
    report.aggregates = Json{{"per_n_unlabeled", per_step},
                             {"strictly_decreasing", decreasing},
                             {"final_median_dist_unsup_limit", medians.back()},
                             {"supervised_limit", model_json(sup_limit)},
                             {"unsupervised_limit", model_json(unsup_limit)}};
    return report;
}

RunReport run_corollary1_experiment(const Corollary1Config& config, std::size_t jobs) {
    if (config.trials == 0) fail(ErrorCode::InvalidArgument, "corollary1 needs >= 1 trial");
    const auto& c = config.common;
    const Generator gen = make_generator(c.shift, c.seed);
    const Generator in_dist = make_generator(0.0, c.seed);
    const std::size_t limit_n = c.limit_factor * (config.n_labeled + config.n_unlabeled);
    const FittedModel sup_limit = supervised_limit(c, gen, limit_n);
    const FittedModel unsup_limit = unsupervised_limit(c, gen, limit_n);
    Rng eval_rng(derive_seed(kDefaultEvalSeed, "regression-eval"));
    const auto eval = draw_labeled(gen.source, config.n_eval, eval_rng);

    struct Outcome {
        std::uint64_t seed = 0;
        bool control = false;
        double l_sup = 0, l_semi = 0, kl_sup = 0, kl_semi = 0, d_sup = 0, d_unsup = 0;
    };
    const std::size_t arms = config.control ? 2 : 1;
    std::vector<Outcome> outcomes(config.trials * arms);

    parallel_for(outcomes.size(), jobs, [&](std::size_t idx) {
        const std::size_t t = idx / arms;
        const bool control = idx % arms == 1;
        const Generator& g = control ? in_dist : gen;
        Outcome& o = outcomes[idx];
        // Both arms of trial t see the same labeled draw.
        o.seed = derive_seed(c.seed, "corollary1", t);
        o.control = control;
        Rng labeled_rng(derive_seed(o.seed, "labeled"));
        Rng unlabeled_rng(derive_seed(o.seed, control ? "unlabeled/source" : "unlabeled/target"));
        const auto labeled = draw_labeled(g.source, config.n_labeled, labeled_rng);
        const auto unlabeled = draw_inputs(g.target, config.n_unlabeled, unlabeled_rng);
        const ModelSpec spec = spec_for(c, g, true);
        const EmConfig em = em_for(c, o.seed);
        const FittedModel sup = supervised_mle(labeled, spec, em);
        const FittedModel semi = semi_supervised_mle(labeled, unlabeled, spec, em);
        o.l_sup = regression_error(sup, eval).value;
        o.l_semi = regression_error(semi, eval).value;
        o.kl_sup = kl_divergence(sup_limit, sup, config.n_mc).value;
        o.kl_semi = kl_divergence(sup_limit, semi, config.n_mc).value;
        o.d_sup = parameter_distance(semi, sup_limit);
        o.d_unsup = parameter_distance(semi, unsup_limit, Block::Marginal);
    });

    RunReport report;
    report.experiment = "corollary1";
    report.config = Json{{"common", common_json(c)},
                         {"n_labeled", config.n_labeled},
                         {"n_unlabeled", config.n_unlabeled},
                         {"trials", config.trials},
                         {"n_eval", config.n_eval},
                         {"n_mc", config.n_mc},
                         {"control", config.control}};
    report.columns = {"trial", "arm", "seed", "n_labeled", "n_unlabeled", "L_sup", "L_semi",
                      "kl_sup", "kl_semi", "param_dist_to_sup_limit", "param_dist_to_unsup_limit",
                      "degraded"};

    auto summarize = [&](bool control) {
        std::size_t degraded = 0, kl_order = 0, n = 0;
        double sum_sup = 0, sum_semi = 0;
        for (const auto& o : outcomes) {
            if (o.control != control) continue;
            ++n;
            degraded += o.l_sup < o.l_semi;
            kl_order += o.kl_sup < o.kl_semi;
            sum_sup += o.l_sup;
            sum_semi += o.l_semi;
        }
        const auto wilson = stats::wilson_interval(degraded, n);
        return Json{{"trials", n},
                    {"degradation_count", degraded},
                    {"degradation_fraction", static_cast<double>(degraded) / static_cast<double>(n)},
                    {"wilson_low", wilson.lower},
                    {"wilson_high", wilson.upper},
                    {"kl_ordering_fraction", static_cast<double>(kl_order) / static_cast<double>(n)},
                    {"mean_L_sup", sum_sup / static_cast<double>(n)},
                    {"mean_L_semi", sum_semi / static_cast<double>(n)}};
    };

    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        if (!o.control) report.seeds.push_back(o.seed);
        report.add_row({static_cast<std::int64_t>(i / arms), std::string(o.control ? "control" : "misspecified"),
                        std::to_string(o.seed), static_cast<std::int64_t>(config.n_labeled),
                        static_cast<std::int64_t>(config.n_unlabeled), o.l_sup, o.l_semi, o.kl_sup,
                        o.kl_semi, o.d_sup, o.d_unsup, static_cast<std::int64_t>(o.l_sup < o.l_semi)});
    }
    report.aggregates = Json{{"L_star", gen.bayes_error()},
                             {"noise_floor", gen.irreducible_error()},
                             {"misspecified", summarize(false)}};
    if (config.control) report.aggregates["control"] = summarize(true);
    report.aggregates["supervised_limit"] = model_json(sup_limit);
    return report;
}

RunReport run_corollary2_experiment(const Corollary2Config& config, std::size_t jobs) {
    if (config.trials == 0) fail(ErrorCode::InvalidArgument, "corollary2 needs >= 1 trial");
    if (!(config.source_fraction >= 0.0 && config.source_fraction <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "source_fraction must lie in [0, 1]");
    }
    const auto& c = config.common;
    const Generator gen = make_generator(c.shift, c.seed);
    const FittedModel sup_limit =
        supervised_limit(c, gen, c.limit_factor * (config.n_labeled + config.n_unlabeled));
    const auto n_source =
        static_cast<std::size_t>(std::llround(config.source_fraction * static_cast<double>(config.n_unlabeled)));

    struct Outcome {
        std::uint64_t seed = 0;
        std::size_t accepted = 0, accepted_source = 0;
        double d_none = 0, d_all = 0, d_t1 = 0;
    };
    std::vector<Outcome> outcomes(config.trials);

    parallel_for(config.trials, jobs, [&](std::size_t t) {
        Outcome& o = outcomes[t];
        o.seed = derive_seed(c.seed, "corollary2", t);
        Rng labeled_rng(derive_seed(o.seed, "labeled"));
        Rng source_rng(derive_seed(o.seed, "pool/source"));
        Rng shifted_rng(derive_seed(o.seed, "pool/shifted"));
        const auto labeled = draw_labeled(gen.source, config.n_labeled, labeled_rng);
        const auto from_source = draw_inputs(gen.source, n_source, source_rng);
        const auto from_shifted = draw_inputs(gen.target, config.n_unlabeled - n_source, shifted_rng);
        std::vector<double> pool(from_source);
        pool.insert(pool.end(), from_shifted.begin(), from_shifted.end());

        const ModelSpec spec = spec_for(c, gen, true);
        const EmConfig em = em_for(c, o.seed);
        const FittedModel sup = supervised_mle(labeled, spec, em);

        std::vector<double> kept;
        if (config.selector == Selector::Oracle) {
            kept = from_source;
            o.accepted_source = from_source.size();
        } else {
            std::vector<std::vector<double>> features, targets;
            for (const auto& obs : labeled) {
                features.push_back(lab_sigma_features(sup, obs.x));
                targets.push_back({obs.y});
            }
            const auto sigma_fit = uncertainty::fit_heteroscedastic(features, targets);
            auto record = [&](const std::string& id, double x, latent::Pool p) {
                return latent::SampleRecord{id, latent::LatentVector(lab_latent(sup, x)),
                                            uncertainty::predict_sigma(sigma_fit, lab_sigma_features(sup, x)),
                                            p};
            };
            latent::SampleSet labeled_set, unlabeled_set;
            for (std::size_t i = 0; i < labeled.size(); ++i) {
                labeled_set.add(record("l" + std::to_string(i), labeled[i].x, latent::Pool::Labeled));
            }
            for (std::size_t i = 0; i < pool.size(); ++i) {
                unlabeled_set.add(record("u" + std::to_string(i), pool[i], latent::Pool::Unlabeled));
            }
            const auto result =
                rejection::filter_unlabeled(unlabeled_set, labeled_set, config.m_nn, 0);
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (!result.decisions[i].accepted) continue;
                kept.push_back(pool[i]);
                o.accepted_source += i < n_source;
            }
        }
        o.accepted = kept.size();
        o.d_none = parameter_distance(sup, sup_limit);
        o.d_all = parameter_distance(semi_supervised_mle(labeled, pool, spec, em), sup_limit);
        o.d_t1 = parameter_distance(semi_supervised_mle(labeled, kept, spec, em), sup_limit);
    });

    RunReport report;
    report.experiment = "corollary2";
    report.config = Json{{"common", common_json(c)},
                         {"n_labeled", config.n_labeled},
                         {"n_unlabeled", config.n_unlabeled},
                         {"source_fraction", config.source_fraction},
                         {"trials", config.trials},
                         {"m_nn", config.m_nn},
                         {"selector", to_string(config.selector)}};
    report.columns = {"trial", "seed", "n_pool", "n_pool_source", "n_accepted", "n_accepted_source",
                      "dist_none", "dist_all", "dist_t1"};
    std::vector<double> none, all, t1;
    double accepted_total = 0.0, accepted_source_total = 0.0;
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
        const auto& o = outcomes[t];
        report.seeds.push_back(o.seed);
        report.add_row({static_cast<std::int64_t>(t), std::to_string(o.seed),
                        static_cast<std::int64_t>(config.n_unlabeled), static_cast<std::int64_t>(n_source),
                        static_cast<std::int64_t>(o.accepted), static_cast<std::int64_t>(o.accepted_source),
                        o.d_none, o.d_all, o.d_t1});
        none.push_back(o.d_none);
        all.push_back(o.d_all);
        t1.push_back(o.d_t1);
        accepted_total += static_cast<double>(o.accepted);
        accepted_source_total += static_cast<double>(o.accepted_source);
    }
    const double med_all = stats::median(all);
    const double med_t1 = stats::median(t1);
    report.aggregates = Json{
        {"median_dist_none", stats::median(none)},
        {"median_dist_all", med_all},
        {"median_dist_t1", med_t1},
        {"ratio_t1_to_all", med_all > 0.0 ? med_t1 / med_all : 0.0},
        {"mean_accepted", accepted_total / static_cast<double>(config.trials)},
        {"accepted_source_share", accepted_total > 0.0 ? accepted_source_total / accepted_total : 0.0},
        {"supervised_limit", model_json(sup_limit)}};
    return report;
}

RunReport run_bias_variance_experiment(const BiasVarianceConfig& config, std::size_t jobs) {
    if (config.trials < 2) fail(ErrorCode::TooFewFits, "bias-variance needs >= 2 trials");
    const auto& c = config.common;
    const Generator gen = make_generator(c.shift, c.seed);
    const FittedModel sup_limit =
        supervised_limit(c, gen, c.limit_factor * (config.n_labeled + config.n_unlabeled));
    const auto reference = canonical_vector(sup_limit);

    std::vector<FittedModel> sup(config.trials), semi(config.trials);
    std::vector<std::uint64_t> seeds(config.trials);
    parallel_for(config.trials, jobs, [&](std::size_t t) {
        seeds[t] = derive_seed(c.seed, "bias-variance", t);
        Rng labeled_rng(derive_seed(seeds[t], "labeled"));
        Rng unlabeled_rng(derive_seed(seeds[t], "unlabeled"));
        const auto labeled = draw_labeled(gen.source, config.n_labeled, labeled_rng);
        const auto unlabeled = draw_inputs(gen.target, config.n_unlabeled, unlabeled_rng);
        const ModelSpec spec = spec_for(c, gen, true);
        const EmConfig em = em_for(c, seeds[t]);
        sup[t] = supervised_mle(labeled, spec, em);
        semi[t] = semi_supervised_mle(labeled, unlabeled, spec, em);
    });

    const auto dec_sup = mse_decomposition(std::span<const FittedModel>(sup), reference);
    const auto dec_semi = mse_decomposition(std::span<const FittedModel>(semi), reference);

    RunReport report;
    report.experiment = "bias-variance";
    report.config = Json{{"common", common_json(c)},
                         {"n_labeled", config.n_labeled},
                         {"n_unlabeled", config.n_unlabeled},
                         {"trials", config.trials}};
    report.seeds = seeds;
    report.columns = {"trial", "seed", "regime", "sq_dist_to_sup_limit"};
    for (std::size_t t = 0; t < config.trials; ++t) {
        for (const auto* fits : {&sup, &semi}) {
            const auto v = canonical_vector((*fits)[t]);
            double sq = 0.0;
            for (std::size_t j = 0; j < v.size(); ++j) sq += (v[j] - reference[j]) * (v[j] - reference[j]);
            report.add_row({static_cast<std::int64_t>(t), std::to_string(seeds[t]),
                            std::string(to_string((*fits)[t].regime())), sq});
        }
    }
    auto dec_json = [](const MseDecomposition& d) {
        return Json{{"bias_sq", d.bias_sq}, {"variance", d.variance}, {"mse", d.mse}};
    };
    report.aggregates = Json{{"supervised", dec_json(dec_sup)},
                             {"semi_supervised", dec_json(dec_semi)},
                             {"reference", reference}};
    return report;
}

}  // namespace artss::lab
