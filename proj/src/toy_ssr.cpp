#include "artss/toy_ssr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "artss/error.hpp"
#include "artss/parallel.hpp"
#include "artss/stats.hpp"
#include "artss/uncertainty.hpp"

namespace artss::toy {

namespace {

constexpr double kTwoPi = 6.283185307179586;

Eigen::MatrixXd make_prototypes(const TaskConfig& cfg, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(cfg.signal_dim);
    Eigen::MatrixXd protos = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(cfg.prototypes));
    for (Eigen::Index p = 0; p < protos.cols(); ++p) {
        for (int term = 0; term < 3; ++term) {
            const double freq = 1.0 + static_cast<double>(rng.uniform_index(4));
            const double phase = rng.uniform(0.0, kTwoPi);
            const double coef = rng.normal();
            for (Eigen::Index t = 0; t < n; ++t) {
                protos(t, p) += coef * std::sin(kTwoPi * freq * static_cast<double>(t) / static_cast<double>(n) + phase);
            }
        }
        const double peak = protos.col(p).cwiseAbs().maxCoeff();
        if (peak > 0.0) protos.col(p) /= peak;
    }
    return protos;
}

struct Pair {
    Eigen::VectorXd x, y;
};

Pair draw_pair(const TaskConfig& cfg, const Eigen::MatrixXd& protos, const Degradation& deg, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(cfg.signal_dim);
    const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    Pair p;
    const auto proto = static_cast<Eigen::Index>(rng.uniform_index(cfg.prototypes));
    p.y = scale * protos.col(proto);
    p.x = p.y;
    for (std::size_t b = 0; b < deg.count; ++b) {
        const double pos = rng.uniform(0.0, static_cast<double>(n));
        const double amp = scale * rng.uniform(deg.amp_lo, deg.amp_hi);
        for (Eigen::Index t = 0; t < n; ++t) {
            const double d = (static_cast<double>(t) - pos) / deg.width;
            p.x(t) += amp * std::exp(-0.5 * d * d);
        }
    }
    if (deg.crosstalk_hi > 0.0 && protos.cols() > 1) {
        const auto other = (proto + 1 + static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(protos.cols() - 1)))) % protos.cols();
        p.x += scale * rng.uniform(deg.crosstalk_lo, deg.crosstalk_hi) * protos.col(other);
    }
    const double noise = rng.uniform(deg.noise_lo, deg.noise_hi);
    if (noise > 0.0) {
        for (Eigen::Index t = 0; t < n; ++t) p.x(t) += noise * rng.normal();
    }
    return p;
}

void check_degradation(const Degradation& d, const char* name) {
    if (!(d.width > 0.0) || d.amp_hi < d.amp_lo || d.crosstalk_lo < 0.0 ||
        d.crosstalk_hi < d.crosstalk_lo || d.noise_lo < 0.0 ||
        d.noise_hi < d.noise_lo) {
        fail(ErrorCode::InvalidArgument, std::string("invalid ") + name + " degradation");
    }
}

// Gradient buffers shaped like the model.
struct Grad {
    Eigen::MatrixXd we, wd;
    Eigen::VectorXd be, bd, a;
    double b = 0.0;
    double c = 0.0;

    explicit Grad(const ToyModel& m)
        : we(Eigen::MatrixXd::Zero(m.we.rows(), m.we.cols())),
          wd(Eigen::MatrixXd::Zero(m.wd.rows(), m.wd.cols())),
          be(Eigen::VectorXd::Zero(m.be.size())),
          bd(Eigen::VectorXd::Zero(m.bd.size())),
          a(Eigen::VectorXd::Zero(m.a.size())) {}

    // Backpropagates output and log-variance gradients of one sample.
    void add(const ToyModel& m, const Eigen::VectorXd& x, const ToyModel::Forward& f,
             const Eigen::VectorXd& g_y, double g_s) {
        // The log-variance also sees log(|x - y|^2 / n + floor).
        const double n = static_cast<double>(x.size());
        const Eigen::VectorXd g_out = g_y - (2.0 * g_s * m.b / (n * (f.removed + kRemovedFloor))) * (x - f.y);
        wd.noalias() += g_out * f.z.transpose();
        bd += g_out;
        Eigen::VectorXd g_z = m.wd.transpose() * g_out + (2.0 * g_s) * m.a.cwiseProduct(f.z);
        a += g_s * f.z.cwiseAbs2();
        b += g_s * std::log(f.removed + kRemovedFloor);
        c += g_s;
        const Eigen::VectorXd g_pre = g_z.cwiseProduct((1.0 - f.z.array().square()).matrix());
        we.noalias() += g_pre * x.transpose();
        be += g_pre;
    }

    Eigen::VectorXd pack() const {
        Eigen::VectorXd v(we.size() + be.size() + wd.size() + bd.size() + a.size() + 2);
        Eigen::Index o = 0;
        auto put = [&](const auto& m) {
            v.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
            o += m.size();
        };
        put(we);
        put(be);
        put(wd);
        put(bd);
        put(a);
        v(o) = b;
        v(o + 1) = c;
        return v;
    }
};

double loss_and_grad(const ToyModel& model, const LossBatch& batch, const TrainConfig& config, Grad* grad) {
    const double n = static_cast<double>(model.signal_dim());
    const double inv_b = 1.0 / static_cast<double>(std::max<std::size_t>(1, batch.batch_size));
    const double smin = uncertainty::min_log_variance();
    const double gamma = config.sigma_weight;
    double total = 0.0;
    for (Eigen::Index i = 0; i < batch.labeled_x.cols(); ++i) {
        const Eigen::VectorXd x = batch.labeled_x.col(i);
        const auto f = model.forward(x);
        const Eigen::VectorXd r = f.y - batch.labeled_y.col(i);
        const double q = r.squaredNorm();
        const bool active = f.log_var > smin;
        const double s = active ? f.log_var : smin;
        const double inv_var = std::exp(-s);
        total += q / n + gamma * (q * inv_var / (2.0 * n) + 0.5 * s);
        if (grad) {
            const Eigen::VectorXd g_y = (inv_b * 2.0 / n * (1.0 + 0.5 * gamma * inv_var)) * r;
            const double g_s = active ? inv_b * gamma * (0.5 - q * inv_var / (2.0 * n)) : 0.0;
            grad->add(model, x, f, g_y, g_s);
        }
    }
    for (Eigen::Index i = 0; i < batch.unlabeled_x.cols(); ++i) {
        const Eigen::VectorXd x = batch.unlabeled_x.col(i);
        const auto f = model.forward(x);
        const Eigen::VectorXd r = f.y - batch.pseudo.col(i);
        total += config.unsup_weight * r.squaredNorm() / n;
        if (grad) grad->add(model, x, f, (config.unsup_weight * inv_b * 2.0 / n) * r, 0.0);
    }
    total *= inv_b;
    if (config.weight_decay > 0.0) {
        total += 0.5 * config.weight_decay * (model.we.squaredNorm() + model.wd.squaredNorm());
        if (grad) {
            grad->we += config.weight_decay * model.we;
            grad->wd += config.weight_decay * model.wd;
        }
    }
    return total;
}

void apply(ToyModel& model, const Grad& g, double lr) {
    model.we -= lr * g.we;
    model.be -= lr * g.be;
    model.wd -= lr * g.wd;
    model.bd -= lr * g.bd;
    model.a -= lr * g.a;
    model.b -= lr * g.b;
    model.c -= lr * g.c;
    ++model.step;
}

void sgd_step(ToyModel& model, const LossBatch& batch, const TrainConfig& config) {
    Grad g(model);
    const double loss = loss_and_grad(model, batch, config, &g);
    if (!std::isfinite(loss)) {
        fail(ErrorCode::NonFiniteLoss, "toy training loss is not finite at step " + std::to_string(model.step));
    }
    apply(model, g, config.learning_rate);
    if (!model.finite()) {
        fail(ErrorCode::NonFiniteLoss, "toy parameters diverged at step " + std::to_string(model.step));
    }
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
    return out;
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// Mean supervised per-sample loss over the labeled pool.
double labeled_loss(const ToyModel& model, const ToyTask& task, const TrainConfig& config) {
    LossBatch all{task.labeled_x, task.labeled_y, {}, {}, static_cast<std::size_t>(task.labeled_x.cols())};
    return loss_and_grad(model, all, config, nullptr);
}

EpochMetrics snapshot(const ToyModel& model, const ToyTask& task, const TrainConfig& config,
                      std::size_t epoch, double threshold) {
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = labeled_loss(model, task, config);
    m.threshold = threshold;
    const auto eval = evaluate(model, task);
    m.test_mse = eval.mse;
    m.psnr = eval.psnr;
    return m;
}

Eigen::VectorXd pseudo_target(const ToyModel& model, const latent::LatentVector& z,
                              const latent::SampleSet& labeled, const Eigen::MatrixXd& labeled_out,
                              std::size_t m) {
    const auto nn = latent::nearest_neighbors(z, labeled, m);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.signal_dim()));
    double wsum = 0.0;
    for (const auto& nb : nn) {
        const double w = 1.0 / labeled[nb.index].sigma;
        p += w * labeled_out.col(static_cast<Eigen::Index>(nb.index));
        wsum += w;
    }
    return p / wsum;
}

Eigen::MatrixXd restore_all(const ToyModel& model, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(model.signal_dim()), x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) out.col(i) = model.restore(x.col(i));
    return out;
}

}  // namespace

ToyTask make_toy_task(const TaskConfig& config) {
    if (!(config.rho >= 0.0 && config.rho <= 1.0)) fail(ErrorCode::InvalidArgument, "rho must lie in [0, 1]");
    if (config.signal_dim == 0 || config.prototypes == 0 || config.n_labeled < 2 || config.n_test == 0) {
        fail(ErrorCode::InvalidArgument, "toy task needs signal_dim, prototypes, n_test >= 1 and n_labeled >= 2");
    }
    if (!(config.scale_lo > 0.0) || config.scale_hi < config.scale_lo) {
        fail(ErrorCode::InvalidArgument, "invalid signal scale range");
    }
    check_degradation(config.source, "source");
    check_degradation(config.shifted, "shifted");

    ToyTask task;
    task.config = config;
    Rng proto_rng(derive_seed(config.seed, "toy/prototypes"));
    const Eigen::MatrixXd protos = make_prototypes(config, proto_rng);
    const auto n = static_cast<Eigen::Index>(config.signal_dim);

    auto fill = [&](std::size_t count, const char* stream, Eigen::MatrixXd& xs, Eigen::MatrixXd* ys,
                    const std::vector<bool>* shifted) {
        Rng rng(derive_seed(config.seed, stream));
        xs.resize(n, static_cast<Eigen::Index>(count));
        if (ys) ys->resize(n, static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i) {
            const bool b = shifted && (*shifted)[i];
            const Pair p = draw_pair(config, protos, b ? config.shifted : config.source, rng);
            xs.col(static_cast<Eigen::Index>(i)) = p.x;
            if (ys) ys->col(static_cast<Eigen::Index>(i)) = p.y;
        }
    };

    fill(config.n_labeled, "toy/labeled", task.labeled_x, &task.labeled_y, nullptr);
    task.unlabeled_shifted.assign(config.n_unlabeled, false);
    const auto n_shift = static_cast<std::size_t>(std::llround(config.rho * static_cast<double>(config.n_unlabeled)));
    Rng mix_rng(derive_seed(config.seed, "toy/mix"));
    for (std::size_t i : mix_rng.sample_without_replacement(config.n_unlabeled, n_shift)) task.unlabeled_shifted[i] = true;
    fill(config.n_unlabeled, "toy/unlabeled", task.unlabeled_x, nullptr, &task.unlabeled_shifted);
    fill(config.n_test, "toy/test", task.test_x, &task.test_y, nullptr);
    task.peak = task.test_y.cwiseAbs().maxCoeff();
    return task;
}

const char* to_string(Arm arm) {
    switch (arm) {
        case Arm::NoSSD: return "nossd";
        case Arm::NR: return "nr";
        case Arm::RS: return "rs";
        case Arm::PsiOnly: return "psi";
        case Arm::ARTSS: return "artss";
    }
    return "unknown";
}

std::optional<Arm> parse_arm(const std::string& name) {
    for (Arm arm : kAllArms) {
        if (name == to_string(arm)) return arm;
    }
    return std::nullopt;
}

ToyModel::ToyModel(std::size_t signal_dim, std::size_t latent_dim, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(signal_dim);
    const auto d = static_cast<Eigen::Index>(latent_dim);
    we.resize(d, n);
    wd.resize(n, d);
    const double se = 1.0 / std::sqrt(static_cast<double>(signal_dim));
    const double sd = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < d; ++i) we(i, j) = se * rng.normal();
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < n; ++i) wd(i, j) = sd * rng.normal();
    be = Eigen::VectorXd::Zero(d);
    bd = Eigen::VectorXd::Zero(n);
    a = Eigen::VectorXd::Zero(d);
    b = 0.0;
    c = 0.0;
}

ToyModel::Forward ToyModel::forward(const Eigen::VectorXd& x) const {
    Forward f;
    f.z = (we * x + be).array().tanh().matrix();
    f.y = wd * f.z + bd;
    f.removed = (x - f.y).squaredNorm() / static_cast<double>(x.size());
    f.log_var = a.dot(f.z.cwiseAbs2()) + b * std::log(f.removed + kRemovedFloor) + c;
    return f;
}

Eigen::VectorXd ToyModel::encode(const Eigen::VectorXd& x) const {
    return (we * x + be).array().tanh().matrix();
}

double ToyModel::sigma(const Eigen::VectorXd& x) const {
    return std::max(std::exp(0.5 * forward(x).log_var), latent::kSigmaFloor);
}

std::size_t ToyModel::parameter_count() const {
    return static_cast<std::size_t>(we.size() + be.size() + wd.size() + bd.size() + a.size() + 2);
}

Eigen::VectorXd ToyModel::pack() const {
    Grad g(*this);
    g.we = we;
    g.be = be;
    g.wd = wd;
    g.bd = bd;
    g.a = a;
    g.b = b;
    g.c = c;
    return g.pack();
}

void ToyModel::unpack(const Eigen::VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != parameter_count()) {
        fail(ErrorCode::DimensionMismatch, "toy parameter vector has the wrong length");
    }
    Eigen::Index o = 0;
    auto take = [&](auto& m) {
        m = Eigen::Map<const Eigen::MatrixXd>(v.data() + o, m.rows(), m.cols());
        o += m.size();
    };
    take(we);
    take(be);
    take(wd);
    take(bd);
    take(a);
    b = v(o);
    c = v(o + 1);
}

bool ToyModel::finite() const {
    return we.allFinite() && be.allFinite() && wd.allFinite() && bd.allFinite() && a.allFinite() &&
           std::isfinite(b) && std::isfinite(c);
}

double combined_loss(const ToyModel& model, const LossBatch& batch, const TrainConfig& config,
                     Eigen::VectorXd* grad) {
    if (!grad) return loss_and_grad(model, batch, config, nullptr);
    Grad g(model);
    const double loss = loss_and_grad(model, batch, config, &g);
    *grad = g.pack();
    return loss;
}

latent::SampleSet labeled_latents(const ToyModel& model, const Eigen::MatrixXd& labeled_x) {
    latent::SampleSet set;
    for (Eigen::Index i = 0; i < labeled_x.cols(); ++i) {
        const Eigen::VectorXd x = labeled_x.col(i);
        const auto f = model.forward(x);
        set.add({"l" + std::to_string(i), latent::LatentVector(std::vector<double>(f.z.data(), f.z.data() + f.z.size())),
                 std::max(std::exp(0.5 * f.log_var), latent::kSigmaFloor), latent::Pool::Labeled});
    }
    return set;
}

Eigen::MatrixXd pseudo_targets(const ToyModel& model, const Eigen::MatrixXd& batch,
                               const Eigen::MatrixXd& labeled_x, std::size_t m_nn) {
    const auto labeled = labeled_latents(model, labeled_x);
    const Eigen::MatrixXd outputs = restore_all(model, labeled_x);
    Eigen::MatrixXd out(batch.rows(), batch.cols());
    for (Eigen::Index i = 0; i < batch.cols(); ++i) {
        const Eigen::VectorXd z = model.encode(batch.col(i));
        out.col(i) = pseudo_target(model, latent::LatentVector(std::vector<double>(z.data(), z.data() + z.size())),
                                   labeled, outputs, m_nn);
    }
    return out;
}

double unsup_loss(const ToyModel& model, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& labeled_x,
                  std::size_t m_nn) {
    if (batch.cols() == 0) return 0.0;
    const Eigen::MatrixXd p = pseudo_targets(model, batch, labeled_x, m_nn);
    double total = 0.0;
    for (Eigen::Index i = 0; i < batch.cols(); ++i) {
        total += (model.restore(batch.col(i)) - p.col(i)).squaredNorm() / static_cast<double>(batch.rows());
    }
    return total / static_cast<double>(batch.cols());
}

double psnr(double mse, double peak) {
    if (!(mse > 0.0)) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

Evaluation evaluate(const ToyModel& model, const ToyTask& task) {
    return evaluate_with([&](const Eigen::VectorXd& x) { return model.restore(x); }, task);
}

ToyModel initial_model(const ToyTask& task, const TrainConfig& config) {
    if (config.latent_dim == 0) fail(ErrorCode::InvalidArgument, "latent_dim must be >= 1");
    Rng rng(derive_seed(config.seed, "toy/init"));
    return ToyModel(task.config.signal_dim, config.latent_dim, rng);
}

TrainResult train_labeled_phase(ToyModel model, const ToyTask& task, const TrainConfig& config) {
    const auto n_l = static_cast<std::size_t>(task.labeled_x.cols());
    if (n_l == 0) fail(ErrorCode::EmptyData, "no labeled pairs");
    if (config.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    Rng order_rng(derive_seed(config.seed, "toy/labeled-order"));
    auto order = iota(n_l);
    for (std::size_t e = 0; e < config.labeled_epochs; ++e) {
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < n_l; start += config.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(std::min(n_l, start + config.batch_size)));
            LossBatch batch{columns(task.labeled_x, idx), columns(task.labeled_y, idx), {}, {}, idx.size()};
            sgd_step(model, batch, config);
        }
        ++model.epoch;
    }
    TrainResult result;
    result.state = rejection::compute_threshold(labeled_latents(model, task.labeled_x), config.m_nn, 0);
    result.metrics.push_back(snapshot(model, task, config, 0, result.state.threshold));
    result.model = std::move(model);
    return result;
}

TrainResult train_unlabeled_phase(TrainResult result, const ToyTask& task, const TrainConfig& config) {
    ToyModel& model = result.model;
    const auto n_u = static_cast<std::size_t>(task.unlabeled_x.cols());
    const auto n_l = static_cast<std::size_t>(task.labeled_x.cols());
    if (config.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");

    std::vector<bool> in_subset(n_u, false);
    if (config.arm == Arm::RS) {
        const std::size_t n_t = config.rs_count ? config.rs_count : n_u / 2;
        if (n_t > n_u) fail(ErrorCode::InvalidArgument, "RS subset larger than the unlabeled pool");
        Rng rs_rng(derive_seed(config.seed, "toy/rs"));
        for (std::size_t i : rs_rng.sample_without_replacement(n_u, n_t)) in_subset[i] = true;
    }

    Rng order_rng(derive_seed(config.seed, "toy/unlabeled-order"));
    Rng interleave_rng(derive_seed(config.seed, "toy/interleave"));
    auto order = iota(n_u);
    auto labeled_order = iota(n_l);
    std::size_t labeled_cursor = n_l;

    for (std::size_t e = 1; e <= config.unlabeled_epochs; ++e) {
        // Epoch-start threshold, frozen for the whole epoch.
        result.state = rejection::compute_threshold(labeled_latents(model, task.labeled_x), config.m_nn,
                                                    static_cast<int>(e));
        const double mean_psi = result.state.mean_psi();
        std::size_t accepted = 0, rejected = 0;
        order_rng.shuffle(order);
        std::size_t iteration = 0;
        for (std::size_t start = 0; start < n_u; start += config.batch_size, ++iteration) {
            const std::size_t end = std::min(n_u, start + config.batch_size);
            // Labeled latents, sigmas and outputs under the current weights.
            const auto labeled = labeled_latents(model, task.labeled_x);
            const Eigen::MatrixXd labeled_out = restore_all(model, task.labeled_x);

            std::vector<std::size_t> keep;
            std::vector<Eigen::VectorXd> pseudo;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t u = order[k];
                const Eigen::VectorXd x = task.unlabeled_x.col(static_cast<Eigen::Index>(u));
                const auto f = model.forward(x);
                const latent::LatentVector z(std::vector<double>(f.z.data(), f.z.data() + f.z.size()));
                const double psi = rejection::similarity_index(z, labeled, result.state.m_nn).psi;
                const double sigma = std::max(std::exp(0.5 * f.log_var), latent::kSigmaFloor);
                auto d = rejection::should_reject(psi, sigma, result.state, "u" + std::to_string(u));
                d.epoch = static_cast<int>(e);
                switch (config.arm) {
                    case Arm::NoSSD: d.accepted = false; break;
                    case Arm::NR: d.accepted = true; break;
                    case Arm::RS: d.accepted = in_subset[u]; break;
                    case Arm::PsiOnly:
                        d.score = psi;
                        d.threshold = mean_psi;
                        d.accepted = psi >= mean_psi;
                        break;
                    case Arm::ARTSS: break;
                }
                if (d.accepted) {
                    keep.push_back(u);
                    pseudo.push_back(pseudo_target(model, z, labeled, labeled_out, result.state.m_nn));
                    ++accepted;
                } else {
                    ++rejected;
                }
                result.decisions.push_back(GateDecision{e, iteration, std::move(d)});
            }

            LossBatch batch;
            batch.batch_size = end - start;
            batch.unlabeled_x = columns(task.unlabeled_x, keep);
            batch.pseudo.resize(task.unlabeled_x.rows(), static_cast<Eigen::Index>(keep.size()));
            for (std::size_t j = 0; j < keep.size(); ++j) batch.pseudo.col(static_cast<Eigen::Index>(j)) = pseudo[j];
            if (config.interleave_labeled) {
                std::vector<std::size_t> idx;
                while (idx.size() < std::min(config.batch_size, n_l)) {
                    if (labeled_cursor == n_l) {
                        interleave_rng.shuffle(labeled_order);
                        labeled_cursor = 0;
                    }
                    idx.push_back(labeled_order[labeled_cursor++]);
                }
                batch.labeled_x = columns(task.labeled_x, idx);
                batch.labeled_y = columns(task.labeled_y, idx);
            }
            result.unsup_updates += keep.size();
            // Nothing accepted: no update at all, so full rejection reduces to the labeled phase.
            if (!keep.empty()) sgd_step(model, batch, config);
        }
        ++model.epoch;
        auto m = snapshot(model, task, config, e, result.state.threshold);
        m.accepted = accepted;
        m.rejected = rejected;
        result.metrics.push_back(m);
    }
    return result;
}

TrainResult train(const ToyTask& task, const TrainConfig& config) {
    return train_unlabeled_phase(train_labeled_phase(initial_model(task, config), task, config), task, config);
}

Json to_json(const TaskConfig& c) {
    auto deg = [](const Degradation& d) {
        return Json{{"count", d.count}, {"width", d.width}, {"amp_lo", d.amp_lo}, {"amp_hi", d.amp_hi},
                    {"crosstalk_lo", d.crosstalk_lo}, {"crosstalk_hi", d.crosstalk_hi}, {"noise_lo", d.noise_lo}, {"noise_hi", d.noise_hi}};
    };
    return Json{{"signal_dim", c.signal_dim}, {"prototypes", c.prototypes}, {"n_labeled", c.n_labeled},
                {"n_unlabeled", c.n_unlabeled}, {"n_test", c.n_test}, {"rho", c.rho},
                {"scale_lo", c.scale_lo}, {"scale_hi", c.scale_hi}, {"source", deg(c.source)},
                {"shifted", deg(c.shifted)}, {"seed", c.seed}};
}

Json to_json(const TrainConfig& c) {
    return Json{{"arm", to_string(c.arm)}, {"latent_dim", c.latent_dim}, {"labeled_epochs", c.labeled_epochs},
                {"unlabeled_epochs", c.unlabeled_epochs}, {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate}, {"sigma_weight", c.sigma_weight},
                {"unsup_weight", c.unsup_weight}, {"weight_decay", c.weight_decay}, {"m_nn", c.m_nn}, {"rs_count", c.rs_count},
                {"interleave_labeled", c.interleave_labeled}, {"seed", c.seed}};
}

namespace {

template <typename T>
void read_key(const Json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* what) {
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, std::string(what) + " config must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
            fail(ErrorCode::InvalidArgument, std::string("unknown ") + what + " key '" + key + "'");
        }
    }
}

Degradation degradation_from_json(const Json& j) {
    reject_unknown(j, {"count", "width", "amp_lo", "amp_hi", "crosstalk_lo", "crosstalk_hi", "noise_lo", "noise_hi"},
                   "degradation");
    Degradation d;
    read_key(j, "count", d.count);
    read_key(j, "width", d.width);
    read_key(j, "amp_lo", d.amp_lo);
    read_key(j, "amp_hi", d.amp_hi);
    read_key(j, "crosstalk_lo", d.crosstalk_lo);
    read_key(j, "crosstalk_hi", d.crosstalk_hi);
    read_key(j, "noise_lo", d.noise_lo);
    read_key(j, "noise_hi", d.noise_hi);
    return d;
}

}  // namespace

TaskConfig task_config_from_json(const Json& j) {
    reject_unknown(j, {"signal_dim", "prototypes", "n_labeled", "n_unlabeled", "n_test", "rho", "scale_lo", "scale_hi",
                       "source", "shifted", "seed"},
                   "task");
    TaskConfig c;
    read_key(j, "signal_dim", c.signal_dim);
    read_key(j, "prototypes", c.prototypes);
    read_key(j, "n_labeled", c.n_labeled);
    read_key(j, "n_unlabeled", c.n_unlabeled);
    read_key(j, "n_test", c.n_test);
    read_key(j, "rho", c.rho);
    read_key(j, "scale_lo", c.scale_lo);
    read_key(j, "scale_hi", c.scale_hi);
    if (j.contains("source")) c.source = degradation_from_json(j.at("source"));
    if (j.contains("shifted")) c.shifted = degradation_from_json(j.at("shifted"));
    read_key(j, "seed", c.seed);
    return c;
}

TrainConfig train_config_from_json(const Json& j) {
    reject_unknown(j, {"arm", "latent_dim", "labeled_epochs", "unlabeled_epochs", "batch_size", "learning_rate",
                       "sigma_weight", "unsup_weight", "weight_decay", "m_nn", "rs_count", "interleave_labeled", "seed"},
                   "train");
    TrainConfig c;
    if (j.contains("arm")) {
        const auto arm = parse_arm(j.at("arm").get<std::string>());
        if (!arm) fail(ErrorCode::InvalidArgument, "unknown arm '" + j.at("arm").get<std::string>() + "'");
        c.arm = *arm;
    }
    read_key(j, "latent_dim", c.latent_dim);
    read_key(j, "labeled_epochs", c.labeled_epochs);
    read_key(j, "unlabeled_epochs", c.unlabeled_epochs);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "learning_rate", c.learning_rate);
    read_key(j, "sigma_weight", c.sigma_weight);
    read_key(j, "unsup_weight", c.unsup_weight);
    read_key(j, "weight_decay", c.weight_decay);
    read_key(j, "m_nn", c.m_nn);
    read_key(j, "rs_count", c.rs_count);
    read_key(j, "interleave_labeled", c.interleave_labeled);
    read_key(j, "seed", c.seed);
    return c;
}

std::vector<std::uint64_t> replicate_seeds(std::uint64_t master, std::size_t count) {
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = derive_seed(master, "toy/replicate", i);
    return seeds;
}

void write_gate_decisions(std::ostream& out, Arm arm, std::uint64_t seed,
                          const std::vector<GateDecision>& decisions, bool header) {
    if (header) out << "arm,seed,iteration,id,psi,sigma,score,threshold,accepted,epoch\n";
    for (const auto& g : decisions) {
        out << to_string(arm) << ',' << seed << ',' << g.iteration << ',';
        rejection::write_decision_row(out, g.decision);
    }
}

AblationResult run_arms(const TaskConfig& task_config, const TrainConfig& base,
                        const std::vector<std::uint64_t>& seeds, const std::vector<Arm>& arms,
                        std::size_t jobs) {
    if (seeds.empty()) fail(ErrorCode::InvalidArgument, "need >= 1 seed");
    if (arms.empty()) fail(ErrorCode::InvalidArgument, "need >= 1 arm");
    const ToyTask task = make_toy_task(task_config);

    // One labeled phase per seed, shared by every arm.
    std::vector<TrainResult> starts(seeds.size());
    parallel_for(seeds.size(), jobs, [&](std::size_t s) {
        TrainConfig cfg = base;
        cfg.seed = seeds[s];
        starts[s] = train_labeled_phase(initial_model(task, cfg), task, cfg);
    });
    const std::size_t cells = seeds.size() * arms.size();
    std::vector<TrainResult> results(cells);
    parallel_for(cells, jobs, [&](std::size_t i) {
        TrainConfig cfg = base;
        cfg.seed = seeds[i / arms.size()];
        cfg.arm = arms[i % arms.size()];
        results[i] = train_unlabeled_phase(starts[i / arms.size()], task, cfg);
    });

    AblationResult out;
    auto& report = out.report;
    report.experiment = "ablation";
    report.config = Json{{"task", to_json(task_config)}, {"train", to_json(base)}};
    report.config["train"].erase("arm");
    report.config["train"].erase("seed");
    Json arm_names = Json::array();
    for (Arm a : arms) arm_names.push_back(to_string(a));
    report.config["arms"] = arm_names;
    report.seeds = seeds;
    report.columns = {"arm", "seed", "test_mse", "psnr", "accepted", "rejected", "unsup_updates", "accepted_shifted"};
    out.metrics.experiment = "ablation-metrics";
    out.metrics.config = report.config;
    out.metrics.seeds = seeds;
    out.metrics.columns = {"arm", "seed", "epoch", "train_loss", "accepted_count", "rejected_count", "T", "test_mse", "psnr"};

    Json per_arm = Json::object();
    for (std::size_t ai = 0; ai < arms.size(); ++ai) {
        std::vector<double> mse, ps;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const auto& r = results[s * arms.size() + ai];
            const auto& last = r.metrics.back();
            std::size_t acc = 0, rej = 0, acc_shift = 0;
            for (const auto& g : r.decisions) {
                if (g.decision.accepted) {
                    ++acc;
                    acc_shift += task.unlabeled_shifted[std::stoul(g.decision.id.substr(1))];
                } else {
                    ++rej;
                }
            }
            report.add_row({std::string(to_string(arms[ai])), std::to_string(seeds[s]), last.test_mse,
                            last.psnr, static_cast<std::int64_t>(acc), static_cast<std::int64_t>(rej),
                            static_cast<std::int64_t>(r.unsup_updates), static_cast<std::int64_t>(acc_shift)});
            for (const auto& m : r.metrics) {
                out.metrics.add_row({std::string(to_string(arms[ai])), std::to_string(seeds[s]),
                                     static_cast<std::int64_t>(m.epoch), m.train_loss,
                                     static_cast<std::int64_t>(m.accepted), static_cast<std::int64_t>(m.rejected),
                                     m.threshold, m.test_mse, m.psnr});
            }
            mse.push_back(last.test_mse);
            ps.push_back(last.psnr);
        }
        per_arm[to_string(arms[ai])] = Json{{"median_mse", stats::median(mse)}, {"iqr_mse", stats::iqr(mse)},
                                            {"median_psnr", stats::median(ps)}, {"iqr_psnr", stats::iqr(ps)}};
    }
    report.aggregates = Json{{"arms", per_arm}};
    out.decisions.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t s = i / arms.size(), ai = i % arms.size();
        // Reorder to arm-major to match the report rows.
        out.decisions[ai * seeds.size() + s] = std::move(results[i].decisions);
    }
    return out;
}

AblationResult run_ablation(const TaskConfig& task, const TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
    if (seeds.size() < 5) fail(ErrorCode::InvalidArgument, "the ablation needs >= 5 seeds");
    return run_arms(task, base, seeds, {std::begin(kAllArms), std::end(kAllArms)}, jobs);
}

}  // namespace artss::toy
