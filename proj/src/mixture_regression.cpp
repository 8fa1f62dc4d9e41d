#include "artss/mixture_regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "artss/error.hpp"

namespace artss::lab {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kMinLabeledMass = 3.0;

double log_normal(double value, double mean, double var) {
    const double d = value - mean;
    return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double log_sum_exp(std::span<const double> terms) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double t : terms) hi = std::max(hi, t);
    if (!std::isfinite(hi)) return hi;
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - hi);
    return hi + std::log(sum);
}

struct EmData {
    std::vector<Observation> labeled;
    std::vector<double> unlabeled;

    std::size_t total() const { return labeled.size() + unlabeled.size(); }
};

// Weighted least squares of y on [1, x]; false when the normal equations are
// too ill-conditioned to trust.
bool weighted_line(double s0, double s1, double s2, double t0, double t1, double& intercept,
                   double& slope) {
    if (!(s0 > 1e-10)) return false;
    const double det = s0 * s2 - s1 * s1;
    if (!(det > 1e-12 * s0 * std::max(s2, 1e-300))) return false;
    intercept = (s2 * t0 - s1 * t1) / det;
    slope = (s0 * t1 - s1 * t0) / det;
    return std::isfinite(intercept) && std::isfinite(slope);
}

void pooled_regression(std::span<const Observation> labeled, double& intercept, double& slope,
                       double& noise_var) {
    intercept = 0.0;
    slope = 0.0;
    noise_var = 1.0;
    if (labeled.empty()) return;
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (const auto& o : labeled) {
        s0 += 1.0;
        s1 += o.x;
        s2 += o.x * o.x;
        t0 += o.y;
        t1 += o.x * o.y;
    }
    if (!weighted_line(s0, s1, s2, t0, t1, intercept, slope)) {
        intercept = t0 / s0;
        slope = 0.0;
    }
    double rss = 0.0;
    for (const auto& o : labeled) {
        const double r = o.y - intercept - slope * o.x;
        rss += r * r;
    }
    noise_var = labeled.size() > 1 && rss > 0.0 ? rss / s0 : 1.0;
}

std::vector<Component> initialize(const EmData& data, std::size_t k, Rng& rng) {
    std::vector<double> xs;
    xs.reserve(data.total());
    for (const auto& o : data.labeled) xs.push_back(o.x);
    xs.insert(xs.end(), data.unlabeled.begin(), data.unlabeled.end());
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());

    double overall_mean = 0.0;
    for (double x : xs) overall_mean += x;
    overall_mean /= n;
    double overall_var = 0.0;
    for (double x : xs) overall_var += (x - overall_mean) * (x - overall_mean);
    overall_var = xs.size() > 1 && overall_var > 0.0 ? overall_var / n : 1.0;

    double pooled_b0, pooled_b1, pooled_t;
    pooled_regression(data.labeled, pooled_b0, pooled_b1, pooled_t);

    // k-means++ seeding on the pooled inputs.
    std::vector<double> centers{xs[rng.uniform_index(xs.size())]};
    std::vector<double> dist2(xs.size());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double c : centers) best = std::min(best, (xs[i] - c) * (xs[i] - c));
            dist2[i] = best;
            total += best;
        }
        if (!(total > 0.0)) {
            centers.push_back(xs[rng.uniform_index(xs.size())]);
            continue;
        }
        double target = rng.uniform() * total;
        std::size_t pick = xs.size() - 1;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            target -= dist2[i];
            if (target < 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(xs[pick]);
    }

    auto nearest = [&](double x) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < centers.size(); ++c) {
            if (std::abs(x - centers[c]) < std::abs(x - centers[best])) best = c;
        }
        return best;
    };

    std::vector<double> count(k, 0.0), sum(k, 0.0), sumsq(k, 0.0);
    for (double x : xs) {
        const std::size_t c = nearest(x);
        count[c] += 1.0;
        sum[c] += x;
        sumsq[c] += x * x;
    }
    std::vector<double> s0(k, 0.0), s1(k, 0.0), s2(k, 0.0), t0(k, 0.0), t1(k, 0.0);
    for (const auto& o : data.labeled) {
        const std::size_t c = nearest(o.x);
        s0[c] += 1.0;
        s1[c] += o.x;
        s2[c] += o.x * o.x;
        t0[c] += o.y;
        t1[c] += o.x * o.y;
    }

    std::vector<Component> comps(k);
    for (std::size_t c = 0; c < k; ++c) {
        Component& comp = comps[c];
        comp.weight = (count[c] + 1.0) / (n + static_cast<double>(k));
        comp.x_mean = count[c] > 0.0 ? sum[c] / count[c] : centers[c];
        const double var = count[c] > 1.0 ? sumsq[c] / count[c] - comp.x_mean * comp.x_mean : 0.0;
        comp.x_var = std::max(var, 0.01 * overall_var);
        comp.intercept = pooled_b0;
        comp.slope = pooled_b1;
        comp.noise_var = pooled_t;
        double b0, b1;
        if (s0[c] >= kMinLabeledMass && weighted_line(s0[c], s1[c], s2[c], t0[c], t1[c], b0, b1)) {
            double rss = 0.0;
            for (const auto& o : data.labeled) {
                if (nearest(o.x) != c) continue;
                const double r = o.y - b0 - b1 * o.x;
                rss += r * r;
            }
            comp.intercept = b0;
            comp.slope = b1;
            comp.noise_var = std::max(rss / s0[c], 0.01 * pooled_t);
        }
    }
    return comps;
}

struct Attempt {
    std::vector<Component> comps;
    std::vector<double> trace;
    bool degenerate = false;
};

// One EM run from `comps`. The trace holds the mean log-likelihood after
// every E-step.
Attempt run_em(const EmData& data, std::vector<Component> comps, const EmConfig& config) {
    const std::size_t k = comps.size();
    const std::size_t nl = data.labeled.size();
    const std::size_t nu = data.unlabeled.size();
    const double n = static_cast<double>(data.total());
    std::vector<double> resp_l(nl * k), resp_u(nu * k), terms(k);

    // Per-component constants so the inner loops cost K exponentials and one
    // logarithm per observation.
    std::vector<double> base_x(k), inv_vx(k), base_y(k), inv_t(k);
    auto posterior = [&](double* resp) {
        double hi = terms[0];
        for (std::size_t c = 1; c < k; ++c) hi = std::max(hi, terms[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            resp[c] = std::exp(terms[c] - hi);
            sum += resp[c];
        }
        for (std::size_t c = 0; c < k; ++c) resp[c] /= sum;
        return hi + std::log(sum);
    };
    auto e_step = [&](const std::vector<Component>& cs) {
        for (std::size_t c = 0; c < k; ++c) {
            base_x[c] = std::log(cs[c].weight) - 0.5 * (kLog2Pi + std::log(cs[c].x_var));
            inv_vx[c] = 1.0 / cs[c].x_var;
            base_y[c] = -0.5 * (kLog2Pi + std::log(cs[c].noise_var));
            inv_t[c] = 1.0 / cs[c].noise_var;
        }
        double total = 0.0;
        for (std::size_t i = 0; i < nl; ++i) {
            const auto& o = data.labeled[i];
            for (std::size_t c = 0; c < k; ++c) {
                const double dx = o.x - cs[c].x_mean;
                const double dy = o.y - cs[c].predict(o.x);
                terms[c] = base_x[c] - 0.5 * dx * dx * inv_vx[c] + base_y[c] - 0.5 * dy * dy * inv_t[c];
            }
            total += posterior(&resp_l[i * k]);
        }
        for (std::size_t i = 0; i < nu; ++i) {
            const double x = data.unlabeled[i];
            for (std::size_t c = 0; c < k; ++c) {
                const double dx = x - cs[c].x_mean;
                terms[c] = base_x[c] - 0.5 * dx * dx * inv_vx[c];
            }
            total += posterior(&resp_u[i * k]);
        }
        return total / n;
    };

    // Returns false when a component collapses.
    auto m_step = [&](std::vector<Component>& cs) {
        for (std::size_t c = 0; c < k; ++c) {
            double w = 0.0, sx = 0.0;
            for (std::size_t i = 0; i < nl; ++i) {
                w += resp_l[i * k + c];
                sx += resp_l[i * k + c] * data.labeled[i].x;
            }
            for (std::size_t i = 0; i < nu; ++i) {
                w += resp_u[i * k + c];
                sx += resp_u[i * k + c] * data.unlabeled[i];
            }
            if (!(w > 1e-6)) return false;
            const double mu = sx / w;
            double sv = 0.0;
            for (std::size_t i = 0; i < nl; ++i) {
                const double d = data.labeled[i].x - mu;
                sv += resp_l[i * k + c] * d * d;
            }
            for (std::size_t i = 0; i < nu; ++i) {
                const double d = data.unlabeled[i] - mu;
                sv += resp_u[i * k + c] * d * d;
            }
            Component& comp = cs[c];
            comp.weight = w / n;
            comp.x_mean = mu;
            comp.x_var = sv / w;
            if (comp.x_var < config.variance_floor) return false;

            double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
            for (std::size_t i = 0; i < nl; ++i) {
                const double r = resp_l[i * k + c];
                const auto& o = data.labeled[i];
                s0 += r;
                s1 += r * o.x;
                s2 += r * o.x * o.x;
                t0 += r * o.y;
                t1 += r * o.x * o.y;
            }
            double b0, b1;
            // A line plus a variance needs a few effective labeled points;
            // below that the component keeps its regression (a generalized
            // EM step, still monotone) instead of interpolating and
            // collapsing its noise variance.
            if (s0 >= kMinLabeledMass && weighted_line(s0, s1, s2, t0, t1, b0, b1)) {
                double rss = 0.0;
                for (std::size_t i = 0; i < nl; ++i) {
                    const auto& o = data.labeled[i];
                    const double r = o.y - b0 - b1 * o.x;
                    rss += resp_l[i * k + c] * r * r;
                }
                comp.intercept = b0;
                comp.slope = b1;
                comp.noise_var = rss / s0;
                if (comp.noise_var < config.variance_floor) return false;
            }
        }
        return true;
    };

    Attempt attempt;
    double ll = e_step(comps);
    attempt.trace.push_back(ll);
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
        if (!m_step(comps)) {
            attempt.degenerate = true;
            break;
        }
        const double next = e_step(comps);
        if (!std::isfinite(next)) {
            attempt.degenerate = true;
            break;
        }
        attempt.trace.push_back(next);
        const double gain = next - ll;
        ll = next;
        if (gain < config.tolerance) break;
    }
    attempt.comps = std::move(comps);
    return attempt;
}

FittedModel fit(EmData data, const ModelSpec& spec, const EmConfig& config, Regime regime) {
    if (spec.components == 0) fail(ErrorCode::InvalidArgument, "mixture needs >= 1 component");
    if (data.total() == 0) fail(ErrorCode::EmptyData, "no observations to fit");
    // The fit depends only on the multiset of observations.
    std::sort(data.labeled.begin(), data.labeled.end(), [](const Observation& a, const Observation& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    std::sort(data.unlabeled.begin(), data.unlabeled.end());

    const double lambda =
        static_cast<double>(data.labeled.size()) / static_cast<double>(data.total());
    const std::size_t wanted = spec.components == 1 ? 1 : std::max<std::size_t>(1, config.restarts);
    const std::size_t max_attempts = 3 * wanted;

    Attempt best;
    bool have_best = false;
    std::size_t successes = 0;
    for (std::size_t a = 0; a < max_attempts && successes < wanted; ++a) {
        Rng rng(derive_seed(config.seed, "em-init", a));
        Attempt attempt = run_em(data, initialize(data, spec.components, rng), config);
        if (attempt.degenerate) continue;
        ++successes;
        if (!have_best || attempt.trace.back() > best.trace.back()) {
            best = std::move(attempt);
            have_best = true;
        }
    }
    if (!have_best) {
        fail(ErrorCode::DegenerateComponent,
             "every EM restart collapsed a component (K=" + std::to_string(spec.components) + ")");
    }
    FittedModel model(std::move(best.comps), regime, lambda);
    model.set_trace(std::move(best.trace));
    return model;
}

}  // namespace

const char* to_string(Regime regime) {
    switch (regime) {
        case Regime::Supervised: return "supervised";
        case Regime::Unsupervised: return "unsupervised";
        case Regime::SemiSupervised: return "semi_supervised";
    }
    return "unknown";
}

FittedModel::FittedModel(std::vector<Component> components, Regime regime, double lambda)
    : components_(canonical_order(std::move(components))), regime_(regime), lambda_(lambda) {}

double FittedModel::log_density_joint(double x, double y) const {
    std::vector<double> terms(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const auto& comp = components_[c];
        terms[c] = std::log(comp.weight) + log_normal(x, comp.x_mean, comp.x_var) +
                   log_normal(y, comp.predict(x), comp.noise_var);
    }
    return log_sum_exp(terms);
}

double FittedModel::log_density_marginal(double x) const {
    std::vector<double> terms(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const auto& comp = components_[c];
        terms[c] = std::log(comp.weight) + log_normal(x, comp.x_mean, comp.x_var);
    }
    return log_sum_exp(terms);
}

std::vector<double> FittedModel::responsibilities(double x) const {
    std::vector<double> terms(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const auto& comp = components_[c];
        terms[c] = std::log(comp.weight) + log_normal(x, comp.x_mean, comp.x_var);
    }
    const double lse = log_sum_exp(terms);
    for (double& t : terms) t = std::exp(t - lse);
    return terms;
}

double FittedModel::predict(double x) const {
    const auto r = responsibilities(x);
    double y = 0.0;
    for (std::size_t c = 0; c < components_.size(); ++c) y += r[c] * components_[c].predict(x);
    return y;
}

Observation FittedModel::sample(Rng& rng) const {
    double u = rng.uniform();
    std::size_t pick = components_.size() - 1;
    for (std::size_t c = 0; c < components_.size(); ++c) {
        u -= components_[c].weight;
        if (u < 0.0) {
            pick = c;
            break;
        }
    }
    const auto& comp = components_[pick];
    Observation o;
    o.x = rng.normal(comp.x_mean, std::sqrt(comp.x_var));
    o.y = rng.normal(comp.predict(o.x), std::sqrt(comp.noise_var));
    return o;
}

std::vector<Component> canonical_order(std::vector<Component> components) {
    std::stable_sort(components.begin(), components.end(),
                     [](const Component& a, const Component& b) { return a.x_mean < b.x_mean; });
    return components;
}

std::vector<double> canonical_vector(std::span<const Component> components) {
    auto sorted = canonical_order(std::vector<Component>(components.begin(), components.end()));
    std::vector<double> v;
    v.reserve(sorted.size() * 6);
    for (const auto& c : sorted) {
        v.insert(v.end(), {c.weight, c.x_mean, std::log(c.x_var), c.intercept, c.slope,
                           std::log(c.noise_var)});
    }
    return v;
}

std::vector<double> canonical_vector(const FittedModel& model) {
    return canonical_vector(model.components());
}

std::vector<double> marginal_vector(const FittedModel& model) {
    std::vector<double> v;
    v.reserve(model.size() * 3);
    for (const auto& c : model.components()) {
        v.insert(v.end(), {c.weight, c.x_mean, std::log(c.x_var)});
    }
    return v;
}

double parameter_distance(const FittedModel& a, const FittedModel& b, Block block) {
    if (a.size() != b.size()) {
        fail(ErrorCode::InvalidArgument, "parameter distance between K=" + std::to_string(a.size()) +
                                             " and K=" + std::to_string(b.size()));
    }
    const auto va = block == Block::Full ? canonical_vector(a) : marginal_vector(a);
    const auto vb = block == Block::Full ? canonical_vector(b) : marginal_vector(b);
    double sq = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) sq += (va[i] - vb[i]) * (va[i] - vb[i]);
    return std::sqrt(sq);
}

FittedModel supervised_mle(std::span<const Observation> labeled, const ModelSpec& spec,
                           const EmConfig& config) {
    if (spec.components == 0) fail(ErrorCode::InvalidArgument, "mixture needs >= 1 component");
    const std::size_t free_params = 6 * spec.components - 1;
    if (labeled.size() < free_params) {
        fail(ErrorCode::EmptyData, "supervised fit needs >= " + std::to_string(free_params) +
                                       " labeled observations, got " + std::to_string(labeled.size()));
    }
    return fit(EmData{{labeled.begin(), labeled.end()}, {}}, spec, config, Regime::Supervised);
}

FittedModel unsupervised_mle(std::span<const double> unlabeled, const ModelSpec& spec,
                             const EmConfig& config) {
    return fit(EmData{{}, {unlabeled.begin(), unlabeled.end()}}, spec, config, Regime::Unsupervised);
}

FittedModel semi_supervised_mle(std::span<const Observation> labeled,
                                std::span<const double> unlabeled, const ModelSpec& spec,
                                const EmConfig& config) {
    return fit(EmData{{labeled.begin(), labeled.end()}, {unlabeled.begin(), unlabeled.end()}}, spec,
               config, Regime::SemiSupervised);
}

}  // namespace artss::lab
