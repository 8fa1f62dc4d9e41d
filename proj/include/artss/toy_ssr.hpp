#pragma once

// Desk-scale two-phase semi-supervised restoration: 1-d signals built from a
// few smooth prototypes, degraded by additive structure, restored by a small
// encoder/decoder whose encoder output is the latent the rejection rule sees.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "artss/rejection.hpp"
#include "artss/rng.hpp"
#include "artss/run_report.hpp"

namespace artss::toy {

// Additive degradation: `count` Gaussian bumps of the given width (in
// samples) and amplitude range, optional crosstalk from a different
// prototype, plus white noise whose level is drawn per sample. Bump and
// crosstalk amplitudes scale with the clean signal's amplitude.
struct Degradation {
    std::size_t count = 4;
    double width = 1.0;
    double amp_lo = 0.4;
    double amp_hi = 0.9;
    double crosstalk_lo = 0.0;  // crosstalk amplitude range; 0 disables it
    double crosstalk_hi = 0.0;
    double noise_lo = 0.02;  // per-sample noise standard deviation range
    double noise_hi = 0.02;
};

struct TaskConfig {
    std::size_t signal_dim = 64;
    std::size_t prototypes = 4;
    std::size_t n_labeled = 48;
    std::size_t n_unlabeled = 512;
    std::size_t n_test = 256;
    double rho = 0.5;  // share of the unlabeled pool degraded by `shifted`
    double scale_lo = 0.75;
    double scale_hi = 1.25;
    Degradation source{.noise_lo = 0.2, .noise_hi = 0.6};
    // Noisier than the source and contaminated by another prototype.
    Degradation shifted{.count = 0, .crosstalk_lo = 1.0, .crosstalk_hi = 1.4, .noise_lo = 0.7, .noise_hi = 0.9};
    std::uint64_t seed = 1;
};

// Signals are stored one per column.
struct ToyTask {
    TaskConfig config;
    Eigen::MatrixXd labeled_x, labeled_y;
    Eigen::MatrixXd unlabeled_x;
    std::vector<bool> unlabeled_shifted;  // which pool entries use the shifted degradation
    Eigen::MatrixXd test_x, test_y;       // source-law pairs
    double peak = 1.0;                    // max |clean| over the test split
};

// Throws InvalidArgument for rho outside [0, 1] or empty splits.
ToyTask make_toy_task(const TaskConfig& config);

enum class Arm { NoSSD, NR, RS, PsiOnly, ARTSS };
const char* to_string(Arm arm);
std::optional<Arm> parse_arm(const std::string& name);
inline constexpr Arm kAllArms[] = {Arm::NoSSD, Arm::NR, Arm::RS, Arm::PsiOnly, Arm::ARTSS};

struct TrainConfig {
    Arm arm = Arm::ARTSS;
    std::size_t latent_dim = 16;
    std::size_t labeled_epochs = 500;
    std::size_t unlabeled_epochs = 60;
    std::size_t batch_size = 8;
    double learning_rate = 0.1;
    double sigma_weight = 0.1;   // weight of the heteroscedastic term in the supervised loss
    double unsup_weight = 2.0;
    double weight_decay = 0.01;  // L2 on the encoder and decoder weight matrices, once per step
    std::size_t m_nn = rejection::kDefaultNeighbors;
    std::size_t rs_count = 0;    // RS subset size; 0 means half the pool
    bool interleave_labeled = true;  // add a labeled batch to every unlabeled-phase update
    std::uint64_t seed = 1;
};

// Encoder z = tanh(We x + be), decoder y = Wd z + bd, uncertainty head
// log sigma^2 = a.(z*z) + b log(|x - y|^2 / n + kRemovedFloor) + c: latent
// activity plus the energy the model strips from its input.
inline constexpr double kRemovedFloor = 1e-4;
class ToyModel {
public:
    ToyModel() = default;
    ToyModel(std::size_t signal_dim, std::size_t latent_dim, Rng& rng);

    struct Forward {
        Eigen::VectorXd z;
        Eigen::VectorXd y;
        double removed = 0.0;  // |x - y|^2 / n
        double log_var = 0.0;
    };
    Forward forward(const Eigen::VectorXd& x) const;
    Eigen::VectorXd encode(const Eigen::VectorXd& x) const;
    Eigen::VectorXd restore(const Eigen::VectorXd& x) const { return forward(x).y; }
    double sigma(const Eigen::VectorXd& x) const;

    std::size_t signal_dim() const { return static_cast<std::size_t>(wd.rows()); }
    std::size_t latent_dim() const { return static_cast<std::size_t>(we.rows()); }
    std::size_t parameter_count() const;
    Eigen::VectorXd pack() const;
    void unpack(const Eigen::VectorXd& params);
    bool finite() const;

    Eigen::MatrixXd we, wd;
    Eigen::VectorXd be, bd, a;
    double b = 0.0;
    double c = 0.0;
    std::size_t epoch = 0;
    std::size_t step = 0;
};

// Per-sample supervised loss |y^ - y|^2 / n + gamma * (|y^ - y|^2 / (2 n sigma^2)
// + log(sigma^2) / 2) and unsupervised loss |y^ - p|^2 / n for a fixed
// pseudo-target p.
struct LossBatch {
    Eigen::MatrixXd labeled_x, labeled_y;  // may be empty
    Eigen::MatrixXd unlabeled_x, pseudo;   // accepted samples only
    std::size_t batch_size = 1;            // both sums are divided by this
};

// Mean combined loss of one SGD step; gradient in ToyModel::pack order when
// `grad` is non-null.
double combined_loss(const ToyModel& model, const LossBatch& batch, const TrainConfig& config,
                     Eigen::VectorXd* grad = nullptr);

// Mean unsupervised loss of a batch against pseudo-targets formed from the
// labeled pool (see pseudo_targets). 0 for an empty batch.
double unsup_loss(const ToyModel& model, const Eigen::MatrixXd& batch,
                  const Eigen::MatrixXd& labeled_x, std::size_t m_nn);

// Pseudo-target per column of `batch`: the 1/sigma-weighted mean of the
// model's outputs on the inputs of its m_nn nearest labeled neighbors in
// latent space.
Eigen::MatrixXd pseudo_targets(const ToyModel& model, const Eigen::MatrixXd& batch,
                               const Eigen::MatrixXd& labeled_x, std::size_t m_nn);

// Latents and sigmas of the labeled pool under the current model, as a
// SampleSet with ids "l<i>".
latent::SampleSet labeled_latents(const ToyModel& model, const Eigen::MatrixXd& labeled_x);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double threshold = 0.0;
    double test_mse = 0.0;
    double psnr = 0.0;
};

struct GateDecision {
    std::size_t epoch = 0;
    std::size_t iteration = 0;
    rejection::RejectionDecision decision;
};

struct TrainResult {
    ToyModel model;
    rejection::ThresholdState state;
    std::vector<EpochMetrics> metrics;
    std::vector<GateDecision> decisions;
    std::size_t unsup_updates = 0;  // accepted (sample, iteration) pairs
};

// Supervised phase from `model`; ends by computing the labeled latents,
// sigmas, psi values and threshold. Metrics hold one epoch-0 row.
TrainResult train_labeled_phase(ToyModel model, const ToyTask& task, const TrainConfig& config);

// Gated unlabeled phase continuing from a labeled-phase result. The
// threshold is recomputed and frozen at the start of every epoch; psi and
// sigma of unlabeled samples are recomputed every iteration.
TrainResult train_unlabeled_phase(TrainResult start, const ToyTask& task, const TrainConfig& config);

// Both phases from the seed-derived initialization.
TrainResult train(const ToyTask& task, const TrainConfig& config);
ToyModel initial_model(const ToyTask& task, const TrainConfig& config);

inline constexpr double kPsnrCap = 99.0;

struct Evaluation {
    double mse = 0.0;
    double psnr = 0.0;
};

Evaluation evaluate(const ToyModel& model, const ToyTask& task);
// Any restoration map, e.g. the identity.
template <typename Fn>
Evaluation evaluate_with(Fn&& restore, const ToyTask& task);
double psnr(double mse, double peak);

// Every listed arm per seed from identical initialization and a shared
// labeled phase. Report rows: one per (arm, seed), arm-major; aggregates hold
// per-arm median/IQR of test MSE and PSNR. Throws InvalidArgument for no
// seeds or no arms.
struct AblationResult {
    RunReport report;
    RunReport metrics;  // per-epoch rows
    std::vector<std::vector<GateDecision>> decisions;  // per (arm, seed) cell, in report row order
};
AblationResult run_arms(const TaskConfig& task, const TrainConfig& base,
                        const std::vector<std::uint64_t>& seeds, const std::vector<Arm>& arms,
                        std::size_t jobs = 1);
// All five arms; needs >= 5 seeds.
AblationResult run_ablation(const TaskConfig& task, const TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1);

Json to_json(const TaskConfig& config);
Json to_json(const TrainConfig& config);
// Inverses of to_json; missing keys keep their defaults. Throws
// InvalidArgument for unknown keys or an unknown arm name.
TaskConfig task_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);

// Per-replicate training seeds under one master seed.
std::vector<std::uint64_t> replicate_seeds(std::uint64_t master, std::size_t count);

void write_gate_decisions(std::ostream& out, Arm arm, std::uint64_t seed,
                          const std::vector<GateDecision>& decisions, bool header);

template <typename Fn>
Evaluation evaluate_with(Fn&& restore, const ToyTask& task) {
    const auto n = task.test_x.cols();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd y = restore(Eigen::VectorXd(task.test_x.col(i)));
        total += (y - task.test_y.col(i)).squaredNorm() / static_cast<double>(task.test_y.rows());
    }
    Evaluation e;
    e.mse = total / static_cast<double>(n);
    e.psnr = psnr(e.mse, task.peak);
    return e;
}

}  // namespace artss::toy
