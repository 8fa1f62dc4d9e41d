#include "artss/degradation_lab.hpp"

#include <algorithm>
#include <cmath>

#include "artss/error.hpp"

namespace artss::lab {

double Generator::irreducible_error() const {
    double e = 0.0;
    for (const auto& c : source) e += c.weight * c.noise_var;
    return e;
}

double Generator::bayes_error() const {
    double lo = source.front().x_mean, hi = lo;
    for (const auto& c : source) {
        lo = std::min(lo, c.x_mean - 12.0 * std::sqrt(c.x_var));
        hi = std::max(hi, c.x_mean + 12.0 * std::sqrt(c.x_var));
    }
    constexpr int kIntervals = 40000;  // even, for Simpson's rule
    const double h = (hi - lo) / kIntervals;
    double total = 0.0;
    for (int i = 0; i <= kIntervals; ++i) {
        const double x = lo + h * i;
        double density = 0.0, first = 0.0, second = 0.0;
        for (const auto& c : source) {
            const double d = x - c.x_mean;
            const double w = c.weight * std::exp(-0.5 * d * d / c.x_var) / std::sqrt(2.0 * M_PI * c.x_var);
            const double m = c.predict(x);
            density += w;
            first += w * m;
            second += w * (c.noise_var + m * m);
        }
        // density * Var(y | x)
        const double integrand = density > 0.0 ? second - first * first / density : 0.0;
        total += integrand * (i == 0 || i == kIntervals ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return total * h / 3.0;
}

std::vector<Component> default_source_law() {
    return {
        Component{0.5, -1.0, 0.25, 0.0, 1.0, 0.04},
        Component{0.5, 1.0, 0.25, 0.0, -1.0, 0.16},
    };
}

Generator make_generator(std::vector<Component> source, double shift, std::uint64_t seed) {
    if (source.empty()) fail(ErrorCode::InvalidArgument, "generator needs >= 1 component");
    double total = 0.0;
    for (const auto& c : source) {
        if (!(c.weight >= 0.0) || !(c.x_var > 0.0) || !(c.noise_var > 0.0)) {
            fail(ErrorCode::InvalidArgument, "generator component has invalid weight or variance");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidArgument, "generator weights must sum to 1");
    Generator gen;
    gen.source = canonical_order(std::move(source));
    gen.target = gen.source;
    gen.target.back().x_mean += shift;
    gen.target.back().intercept += shift;
    gen.shift = shift;
    gen.seed = seed;
    return gen;
}

Generator make_generator(double shift, std::uint64_t seed) {
    return make_generator(default_source_law(), shift, seed);
}

namespace {
std::size_t pick_component(std::span<const Component> law, Rng& rng) {
    double u = rng.uniform();
    for (std::size_t c = 0; c < law.size(); ++c) {
        u -= law[c].weight;
        if (u < 0.0) return c;
    }
    return law.size() - 1;
}
}  // namespace

std::vector<Observation> draw_labeled(std::span<const Component> law, std::size_t n, Rng& rng) {
    std::vector<Observation> out(n);
    for (auto& o : out) {
        const auto& c = law[pick_component(law, rng)];
        o.x = rng.normal(c.x_mean, std::sqrt(c.x_var));
        o.y = rng.normal(c.predict(o.x), std::sqrt(c.noise_var));
    }
    return out;
}

std::vector<double> draw_inputs(std::span<const Component> law, std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    for (auto& x : out) {
        const auto& c = law[pick_component(law, rng)];
        x = rng.normal(c.x_mean, std::sqrt(c.x_var));
    }
    return out;
}

DataDraw sample_data(const Generator& gen, std::size_t n_labeled, std::size_t n_unlabeled,
                     Domain pool, std::uint64_t stream) {
    const char* name = pool == Domain::Source ? "sample/source" : "sample/target";
    Rng labeled_rng(derive_seed(gen.seed, std::string(name) + "/labeled", stream));
    Rng unlabeled_rng(derive_seed(gen.seed, std::string(name) + "/unlabeled", stream));
    DataDraw draw;
    draw.labeled = draw_labeled(gen.law(pool), n_labeled, labeled_rng);
    draw.unlabeled = draw_inputs(gen.law(pool), n_unlabeled, unlabeled_rng);
    return draw;
}

MonteCarloEstimate regression_error(const FittedModel& model, std::span<const Observation> eval) {
    if (eval.empty()) fail(ErrorCode::EmptyData, "no evaluation draws");
    const double n = static_cast<double>(eval.size());
    double sum = 0.0, sumsq = 0.0;
    for (const auto& o : eval) {
        const double r = o.y - model.predict(o.x);
        const double e = r * r;
        sum += e;
        sumsq += e * e;
    }
    const double mean = sum / n;
    const double var = eval.size() > 1 ? std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0)) : 0.0;
    return MonteCarloEstimate{mean, std::sqrt(var / n)};
}

MonteCarloEstimate regression_error(const FittedModel& model, const Generator& gen,
                                    std::size_t n_eval, std::uint64_t eval_seed) {
    Rng rng(derive_seed(eval_seed, "regression-eval"));
    const auto eval = draw_labeled(gen.source, n_eval, rng);
    return regression_error(model, eval);
}

double gaussian_kl(double mean_p, double var_p, double mean_q, double var_q) {
    const double d = mean_p - mean_q;
    return 0.5 * (std::log(var_q / var_p) + (var_p + d * d) / var_q - 1.0);
}

MonteCarloEstimate kl_divergence(const FittedModel& p, const FittedModel& q, std::size_t n_mc,
                                 std::uint64_t seed) {
    if (p.size() == 1 && q.size() == 1) {
        const auto& a = p.components().front();
        const auto& b = q.components().front();
        // KL of the x-marginal plus the expected KL of the conditionals.
        const double kl_x = gaussian_kl(a.x_mean, a.x_var, b.x_mean, b.x_var);
        const double d0 = a.intercept - b.intercept;
        const double d1 = a.slope - b.slope;
        const double mean_gap = d0 + d1 * a.x_mean;
        const double expected_sq = mean_gap * mean_gap + d1 * d1 * a.x_var;
        const double kl_y = 0.5 * (std::log(b.noise_var / a.noise_var) +
                                   (a.noise_var + expected_sq) / b.noise_var - 1.0);
        return MonteCarloEstimate{kl_x + kl_y, 0.0};
    }
    if (n_mc < 2) fail(ErrorCode::InvalidArgument, "Monte-Carlo KL needs >= 2 draws");
    Rng rng(derive_seed(seed, "kl-mc"));
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const auto o = p.sample(rng);
        const double v = p.log_density_joint(o.x, o.y) - q.log_density_joint(o.x, o.y);
        sum += v;
        sumsq += v * v;
    }
    const double n = static_cast<double>(n_mc);
    const double mean = sum / n;
    const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
    return MonteCarloEstimate{mean, std::sqrt(var / n)};
}

MseDecomposition mse_decomposition(std::span<const std::vector<double>> estimates,
                                   std::span<const double> reference) {
    if (estimates.size() < 2) {
        fail(ErrorCode::TooFewFits, "need >= 2 fits, got " + std::to_string(estimates.size()));
    }
    const std::size_t dim = reference.size();
    for (const auto& e : estimates) {
        if (e.size() != dim) fail(ErrorCode::InvalidArgument, "estimate length differs from reference");
    }
    const double n = static_cast<double>(estimates.size());
    std::vector<double> mean(dim, 0.0);
    for (const auto& e : estimates)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += e[j];
    for (double& m : mean) m /= n;

    MseDecomposition out;
    for (std::size_t j = 0; j < dim; ++j) out.bias_sq += (mean[j] - reference[j]) * (mean[j] - reference[j]);
    for (const auto& e : estimates) {
        for (std::size_t j = 0; j < dim; ++j) {
            out.variance += (e[j] - mean[j]) * (e[j] - mean[j]);
            out.mse += (e[j] - reference[j]) * (e[j] - reference[j]);
        }
    }
    out.variance /= n;
    out.mse /= n;
    return out;
}

MseDecomposition mse_decomposition(std::span<const FittedModel> fits,
                                   std::span<const double> reference) {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(fits.size());
    for (const auto& f : fits) vectors.push_back(canonical_vector(f));
    return mse_decomposition(vectors, reference);
}

}  // namespace artss::lab
