#include "artss/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "artss/error.hpp"

namespace artss::uncertainty {

double min_log_variance() { return 2.0 * std::log(kSigmaFloor); }

namespace {

Eigen::VectorXd augmented(std::span<const double> input) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(input.size() + 1));
    x(0) = 1.0;
    for (std::size_t j = 0; j < input.size(); ++j) x(static_cast<Eigen::Index>(j + 1)) = input[j];
    return x;
}

void check_input(const HeteroscedasticFit& fit, std::span<const double> input) {
    if (input.size() != fit.input_dim) {
        fail(ErrorCode::DimensionMismatch, "input dimension " + std::to_string(input.size()) +
                                               ", fit expects " + std::to_string(fit.input_dim));
    }
}

Eigen::MatrixXd solve_weighted_ls(const Problem& problem, const Eigen::VectorXd& weights) {
    const double wmax = weights.maxCoeff();
    Eigen::VectorXd root = (weights / wmax).cwiseSqrt();
    Eigen::MatrixXd a = root.asDiagonal() * problem.design;
    Eigen::MatrixXd b = root.asDiagonal() * problem.targets;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    return cod.solve(b).transpose();  // p x (d + 1)
}

Eigen::VectorXd log_variances(const Problem& problem, const Eigen::VectorXd& logvar_weights) {
    return problem.design * logvar_weights;
}

}  // namespace

Eigen::VectorXd HeteroscedasticFit::predict_mean(std::span<const double> input) const {
    check_input(*this, input);
    return mean_weights * augmented(input);
}

double HeteroscedasticFit::predict_log_variance(std::span<const double> input) const {
    check_input(*this, input);
    return logvar_weights.dot(augmented(input));
}

Problem make_problem(std::span<const std::vector<double>> inputs,
                     std::span<const std::vector<double>> targets) {
    if (inputs.empty() || targets.empty()) fail(ErrorCode::EmptyData, "no training data");
    if (inputs.size() != targets.size()) {
        fail(ErrorCode::DimensionMismatch, std::to_string(inputs.size()) + " inputs vs " +
                                               std::to_string(targets.size()) + " targets");
    }
    const std::size_t d = inputs.front().size();
    const std::size_t p = targets.front().size();
    if (d == 0 || p == 0) fail(ErrorCode::EmptyData, "zero-dimensional inputs or targets");
    const auto n = static_cast<Eigen::Index>(inputs.size());
    Problem problem{Eigen::MatrixXd(n, static_cast<Eigen::Index>(d + 1)),
                    Eigen::MatrixXd(n, static_cast<Eigen::Index>(p))};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& x = inputs[static_cast<std::size_t>(i)];
        const auto& y = targets[static_cast<std::size_t>(i)];
        if (x.size() != d || y.size() != p) {
            fail(ErrorCode::DimensionMismatch, "ragged row " + std::to_string(i));
        }
        problem.design(i, 0) = 1.0;
        for (std::size_t j = 0; j < d; ++j) problem.design(i, static_cast<Eigen::Index>(j + 1)) = x[j];
        for (std::size_t j = 0; j < p; ++j) problem.targets(i, static_cast<Eigen::Index>(j)) = y[j];
    }
    return problem;
}

Eigen::VectorXd pack(const HeteroscedasticFit& fit) {
    const Eigen::Index nm = fit.mean_weights.size();
    Eigen::VectorXd params(nm + fit.logvar_weights.size());
    params.head(nm) = Eigen::Map<const Eigen::VectorXd>(fit.mean_weights.data(), nm);
    params.tail(fit.logvar_weights.size()) = fit.logvar_weights;
    return params;
}

void unpack(const Eigen::VectorXd& params, HeteroscedasticFit& fit) {
    const auto p = static_cast<Eigen::Index>(fit.output_dim);
    const auto cols = static_cast<Eigen::Index>(fit.input_dim + 1);
    fit.mean_weights = Eigen::Map<const Eigen::MatrixXd>(params.data(), p, cols);
    fit.logvar_weights = params.tail(cols);
}

double heteroscedastic_nll(const Eigen::VectorXd& params, const Problem& problem,
                           Eigen::VectorXd* grad) {
    const Eigen::Index n = problem.design.rows();
    const Eigen::Index cols = problem.design.cols();
    const Eigen::Index p = problem.targets.cols();
    Eigen::Map<const Eigen::MatrixXd> w(params.data(), p, cols);
    Eigen::VectorXd a = params.tail(cols);
    const double smin = min_log_variance();

    Eigen::MatrixXd residual = problem.targets - problem.design * w.transpose();  // n x p
    Eigen::VectorXd s = problem.design * a;

    double total = 0.0;
    Eigen::MatrixXd grad_w = Eigen::MatrixXd::Zero(p, cols);
    Eigen::VectorXd grad_a = Eigen::VectorXd::Zero(cols);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool active = s(i) > smin;
        const double si = active ? s(i) : smin;
        const double inv_var = std::exp(-si);
        const double sq = residual.row(i).squaredNorm();
        total += sq * inv_var / (2.0 * static_cast<double>(p)) + 0.5 * si;
        if (grad) {
            grad_w.noalias() -= (inv_var / static_cast<double>(p)) * residual.row(i).transpose() *
                                problem.design.row(i);
            if (active) {
                grad_a += (0.5 - sq * inv_var / (2.0 * static_cast<double>(p))) *
                          problem.design.row(i).transpose();
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad) {
        grad->resize(params.size());
        grad->head(grad_w.size()) = Eigen::Map<Eigen::VectorXd>(grad_w.data(), grad_w.size()) * inv_n;
        grad->tail(cols) = grad_a * inv_n;
    }
    return total * inv_n;
}

HeteroscedasticFit fit_heteroscedastic(std::span<const std::vector<double>> inputs,
                                       std::span<const std::vector<double>> targets,
                                       const FitConfig& config) {
    const Problem problem = make_problem(inputs, targets);
    const Eigen::Index n = problem.design.rows();
    const Eigen::Index cols = problem.design.cols();
    const auto p = static_cast<double>(problem.targets.cols());

    HeteroscedasticFit fit;
    fit.input_dim = static_cast<std::size_t>(cols - 1);
    fit.output_dim = static_cast<std::size_t>(problem.targets.cols());
    fit.mean_weights = solve_weighted_ls(problem, Eigen::VectorXd::Ones(n));
    const double pooled = (problem.targets - problem.design * fit.mean_weights.transpose())
                              .squaredNorm() / (static_cast<double>(n) * p);
    fit.logvar_weights = Eigen::VectorXd::Zero(cols);
    fit.logvar_weights(0) = std::max(std::log(std::max(pooled, 0.0)), min_log_variance());

    Eigen::VectorXd params = pack(fit);
    double nll = heteroscedastic_nll(params, problem);
    if (!std::isfinite(nll)) fail(ErrorCode::NonFiniteLoss, "initial heteroscedastic NLL");
    fit.nll_trace.push_back(nll);

    const double smin = min_log_variance();
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
        const double before = nll;

        // Mean head: exact weighted least squares given the current variances.
        {
            Eigen::VectorXd s = log_variances(problem, fit.logvar_weights);
            Eigen::VectorXd weights(n);
            for (Eigen::Index i = 0; i < n; ++i) weights(i) = std::exp(-std::max(s(i), smin));
            HeteroscedasticFit trial = fit;
            trial.mean_weights = solve_weighted_ls(problem, weights);
            Eigen::VectorXd trial_params = pack(trial);
            const double trial_nll = heteroscedastic_nll(trial_params, problem);
            if (std::isfinite(trial_nll) && trial_nll <= nll) {
                fit = std::move(trial);
                params = std::move(trial_params);
                nll = trial_nll;
            }
        }

        // Log-variance head: damped Newton step with Armijo backtracking.
        {
            Eigen::MatrixXd residual = problem.targets - problem.design * fit.mean_weights.transpose();
            Eigen::VectorXd s = log_variances(problem, fit.logvar_weights);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(cols);
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(cols, cols);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (s(i) <= smin) continue;
                const double q = residual.row(i).squaredNorm() * std::exp(-s(i)) / (2.0 * p);
                g += (0.5 - q) * problem.design.row(i).transpose();
                h += q * problem.design.row(i).transpose() * problem.design.row(i);
            }
            g /= static_cast<double>(n);
            h /= static_cast<double>(n);
            h.diagonal().array() += 1e-9;
            Eigen::VectorXd dir = -h.ldlt().solve(g);
            if (!dir.allFinite() || g.dot(dir) >= 0.0) dir = -g;
            const double slope = g.dot(dir);
            if (slope < 0.0) {
                double step = 1.0;
                for (int k = 0; k < 80; ++k, step *= 0.5) {
                    HeteroscedasticFit trial = fit;
                    trial.logvar_weights += step * dir;
                    Eigen::VectorXd trial_params = pack(trial);
                    const double trial_nll = heteroscedastic_nll(trial_params, problem);
                    if (std::isfinite(trial_nll) && trial_nll <= nll + 1e-4 * step * slope) {
                        fit = std::move(trial);
                        params = std::move(trial_params);
                        nll = trial_nll;
                        break;
                    }
                }
            }
        }

        if (!std::isfinite(nll)) fail(ErrorCode::NonFiniteLoss, "heteroscedastic NLL diverged");
        fit.nll_trace.push_back(nll);
        if (before - nll < config.tolerance) break;
    }
    return fit;
}

double predict_sigma(const HeteroscedasticFit& fit, std::span<const double> input) {
    const double s = fit.predict_log_variance(input);
    return std::max(std::exp(0.5 * s), kSigmaFloor);
}

double predict_sigma(const HeteroscedasticFit& fit, const latent::LatentVector& input) {
    return predict_sigma(fit, input.values());
}

SigmaValidation validate_external_sigma(std::span<const latent::SampleRecord> records) {
    SigmaValidation out;
    for (const auto& rec : records) {
        latent::SampleRecord copy = rec;
        if (std::isnan(rec.sigma) || std::isinf(rec.sigma)) {
            fail(ErrorCode::MalformedRow, "non-finite sigma for id '" + rec.id + "'");
        }
        if (rec.sigma <= 0.0) {
            out.warnings.push_back("id '" + rec.id + "': sigma " + latent::format_double(rec.sigma) +
                                   " clamped to floor");
            copy.sigma = kSigmaFloor;
        } else if (rec.sigma < kSigmaFloor) {
            copy.sigma = kSigmaFloor;
        } else if (rec.sigma > kSuspectSigma) {
            out.warnings.push_back("id '" + rec.id + "': suspect sigma " +
                                   latent::format_double(rec.sigma));
        }
        out.samples.add(std::move(copy));
    }
    return out;
}

}  // namespace artss::uncertainty
