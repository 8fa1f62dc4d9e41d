#include <doctest.h>

#include <cmath>
#include <sstream>

#include "artss/rng.hpp"
#include "artss/toy_ssr.hpp"
#include "support.hpp"

using namespace artss;
using namespace artss::toy;

namespace {

TaskConfig small_task() {
    TaskConfig t;
    t.signal_dim = 16;
    t.prototypes = 2;
    t.n_labeled = 12;
    t.n_unlabeled = 20;
    t.n_test = 16;
    t.scale_lo = 0.8;
    t.scale_hi = 1.2;
    t.seed = 7;
    return t;
}

TrainConfig small_train() {
    TrainConfig c;
    c.latent_dim = 4;
    c.labeled_epochs = 20;
    c.unlabeled_epochs = 3;
    c.batch_size = 4;
    c.m_nn = 3;
    c.seed = 3;
    return c;
}

bool same_params(const ToyModel& a, const ToyModel& b) {
    const Eigen::VectorXd pa = a.pack(), pb = b.pack();
    return pa.size() == pb.size() && (pa.array() == pb.array()).all();
}

std::size_t accepted_count(const TrainResult& r) {
    std::size_t n = 0;
    for (const auto& g : r.decisions) n += g.decision.accepted ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("task generation is seeded, validated and honors rho") {
    auto cfg = small_task();
    const auto a = make_toy_task(cfg);
    const auto b = make_toy_task(cfg);
    CHECK(a.labeled_x == b.labeled_x);
    CHECK(a.unlabeled_x == b.unlabeled_x);
    CHECK(a.test_y == b.test_y);
    CHECK(a.labeled_x.rows() == 16);
    CHECK(a.unlabeled_x.cols() == 20);

    cfg.rho = 0.0;
    const auto none = make_toy_task(cfg);
    CHECK(std::count(none.unlabeled_shifted.begin(), none.unlabeled_shifted.end(), true) == 0);
    cfg.rho = 1.0;
    const auto all = make_toy_task(cfg);
    CHECK(std::count(all.unlabeled_shifted.begin(), all.unlabeled_shifted.end(), true) == 20);
    cfg.rho = 0.25;
    const auto some = make_toy_task(cfg);
    CHECK(std::count(some.unlabeled_shifted.begin(), some.unlabeled_shifted.end(), true) == 5);
    // The labeled split does not depend on the mix.
    CHECK(some.labeled_x == a.labeled_x);

    cfg.rho = 1.5;
    CHECK(code_of([&] { make_toy_task(cfg); }) == ErrorCode::InvalidArgument);
    cfg.rho = -0.1;
    CHECK(code_of([&] { make_toy_task(cfg); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("arm names round-trip") {
    for (Arm arm : kAllArms) CHECK(parse_arm(to_string(arm)) == arm);
    CHECK_FALSE(parse_arm("bogus").has_value());
}

TEST_CASE("pack and unpack round-trip") {
    Rng rng(5);
    ToyModel m(16, 4, rng);
    m.c = 0.3;
    const Eigen::VectorXd p = m.pack();
    CHECK(static_cast<std::size_t>(p.size()) == m.parameter_count());
    ToyModel other(16, 4, rng);
    other.unpack(p);
    CHECK(same_params(m, other));
    CHECK(code_of([&] { other.unpack(Eigen::VectorXd::Zero(3)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("combined loss gradient matches central differences") {
    const auto task = make_toy_task(small_task());
    TrainConfig cfg = small_train();
    cfg.weight_decay = 1e-3;
    Rng rng(2024);
    for (int point = 0; point < 10; ++point) {
        ToyModel m(16, 4, rng);
        for (Eigen::Index i = 0; i < m.a.size(); ++i) m.a(i) = 0.3 * rng.normal();
        m.bd = 0.1 * Eigen::VectorXd::Random(16);
        m.b = rng.uniform(-1.0, 1.0);
        m.c = rng.uniform(-2.0, 1.0);
        cfg.sigma_weight = rng.uniform(0.05, 1.0);
        cfg.unsup_weight = rng.uniform(0.5, 2.0);

        LossBatch batch;
        batch.labeled_x = task.labeled_x.leftCols(3);
        batch.labeled_y = task.labeled_y.leftCols(3);
        batch.unlabeled_x = task.unlabeled_x.leftCols(2);
        batch.pseudo = pseudo_targets(m, batch.unlabeled_x, task.labeled_x, cfg.m_nn);
        batch.batch_size = 5;

        Eigen::VectorXd grad;
        combined_loss(m, batch, cfg, &grad);
        const Eigen::VectorXd theta = m.pack();
        Eigen::VectorXd fd(theta.size());
        const double h = 1e-6;
        ToyModel probe = m;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            Eigen::VectorXd t = theta;
            t(k) += h;
            probe.unpack(t);
            const double up = combined_loss(probe, batch, cfg);
            t(k) -= 2.0 * h;
            probe.unpack(t);
            const double down = combined_loss(probe, batch, cfg);
            fd(k) = (up - down) / (2.0 * h);
        }
        const double rel = (grad - fd).norm() / std::max(grad.norm(), fd.norm());
        CHECK(rel <= 1e-4);
    }
}

TEST_CASE("unsupervised loss examples") {
    const auto task = make_toy_task(small_task());
    const auto cfg = small_train();
    const auto model = initial_model(task, cfg);
    // A labeled input is its own nearest neighbor, so with one neighbor the
    // pseudo-target is the model's own output.
    CHECK(unsup_loss(model, task.labeled_x.leftCols(4), task.labeled_x, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(unsup_loss(model, Eigen::MatrixXd(16, 0), task.labeled_x, 3) == 0.0);
    CHECK(unsup_loss(model, task.unlabeled_x, task.labeled_x, 3) >= 0.0);
}

TEST_CASE("psnr and evaluation") {
    auto cfg = small_task();
    cfg.source.count = 0;
    cfg.source.noise_lo = cfg.source.noise_hi = 0.0;
    const auto task = make_toy_task(cfg);
    const auto identity = evaluate_with([](const Eigen::VectorXd& x) { return x; }, task);
    CHECK(identity.mse == 0.0);
    CHECK(identity.psnr == kPsnrCap);
    CHECK(psnr(0.01, 1.0) == doctest::Approx(20.0));
    CHECK(psnr(0.005, 1.0) - psnr(0.01, 1.0) == doctest::Approx(10.0 * std::log10(2.0)));
}

TEST_CASE("labeled phase: trained beats untrained and the threshold is reproducible") {
    const auto task = make_toy_task(small_task());
    const auto cfg = small_train();
    const auto init = initial_model(task, cfg);
    const auto r = train_labeled_phase(init, task, cfg);
    CHECK(evaluate(r.model, task).mse < evaluate(init, task).mse);
    REQUIRE(r.metrics.size() == 1);
    CHECK(r.metrics[0].epoch == 0);
    CHECK(r.model.epoch == cfg.labeled_epochs);
    for (const auto& [id, psi] : r.state.labeled_psi) {
        CHECK(psi >= -1.0);
        CHECK(psi <= 1.0);
    }
    // Recomputing on the frozen model gives the same threshold.
    const auto again = rejection::compute_threshold(labeled_latents(r.model, task.labeled_x), cfg.m_nn, 0);
    CHECK(again.threshold == r.state.threshold);
    CHECK(again.labeled_psi == r.state.labeled_psi);
}

TEST_CASE("noiseless identity degradation is fitted to near zero loss") {
    // x = y: a linear operator with an exact least-squares solution, so the
    // reconstruction loss can be driven down.
    auto tcfg = small_task();
    tcfg.source.count = 0;
    tcfg.source.noise_lo = tcfg.source.noise_hi = 0.0;
    const auto task = make_toy_task(tcfg);
    TrainConfig cfg = small_train();
    cfg.sigma_weight = 0.0;
    cfg.weight_decay = 0.0;
    cfg.labeled_epochs = 400;
    cfg.learning_rate = 0.2;
    const auto r = train_labeled_phase(initial_model(task, cfg), task, cfg);
    CHECK(r.metrics[0].train_loss < 1e-3);
}

TEST_CASE("gate accounting: NR accepts every pass, ARTSS updates match accepted rows") {
    const auto task = make_toy_task(small_task());
    TrainConfig cfg = small_train();
    const auto start = train_labeled_phase(initial_model(task, cfg), task, cfg);

    cfg.arm = Arm::NR;
    const auto nr = train_unlabeled_phase(start, task, cfg);
    CHECK(nr.decisions.size() == 20 * cfg.unlabeled_epochs);
    CHECK(nr.unsup_updates == 20 * cfg.unlabeled_epochs);
    CHECK(accepted_count(nr) == nr.unsup_updates);
    CHECK(nr.metrics.size() == 1 + cfg.unlabeled_epochs);

    cfg.arm = Arm::ARTSS;
    const auto art = train_unlabeled_phase(start, task, cfg);
    CHECK(art.unsup_updates == accepted_count(art));
    for (const auto& g : art.decisions) {
        CHECK(g.decision.accepted == (g.decision.score >= g.decision.threshold));
        CHECK(g.decision.epoch == static_cast<int>(g.epoch));
    }
    std::size_t per_epoch = 0;
    for (std::size_t e = 1; e < art.metrics.size(); ++e) per_epoch += art.metrics[e].accepted;
    CHECK(per_epoch == art.unsup_updates);
}

TEST_CASE("RS with the whole pool equals NR and NoSSD equals the labeled phase") {
    const auto task = make_toy_task(small_task());
    TrainConfig cfg = small_train();
    const auto start = train_labeled_phase(initial_model(task, cfg), task, cfg);

    cfg.arm = Arm::NR;
    const auto nr = train_unlabeled_phase(start, task, cfg);
    cfg.arm = Arm::RS;
    cfg.rs_count = 20;
    const auto rs = train_unlabeled_phase(start, task, cfg);
    CHECK(same_params(nr.model, rs.model));

    cfg.arm = Arm::NoSSD;
    const auto none = train(task, cfg);
    CHECK(none.unsup_updates == 0);
    CHECK(same_params(none.model, start.model));

    cfg.rs_count = 21;
    cfg.arm = Arm::RS;
    CHECK(code_of([&] { train_unlabeled_phase(start, task, cfg); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("full rejection reduces ARTSS to NoSSD bitwise") {
    auto task = make_toy_task(small_task());
    TrainConfig cfg = small_train();
    auto start = train_labeled_phase(initial_model(task, cfg), task, cfg);
    // With a zero encoder bias the latent of -x is minus the latent of x, so
    // unlabeled inputs that negate labeled ones point away from the labeled pool.
    start.model.be.setZero();
    start.state = rejection::compute_threshold(labeled_latents(start.model, task.labeled_x), cfg.m_nn, 0);
    REQUIRE(start.state.threshold > 0.0);
    for (Eigen::Index i = 0; i < task.unlabeled_x.cols(); ++i) {
        task.unlabeled_x.col(i) = -task.labeled_x.col(i % task.labeled_x.cols());
    }

    cfg.arm = Arm::ARTSS;
    const auto art = train_unlabeled_phase(start, task, cfg);
    REQUIRE(accepted_count(art) == 0);
    CHECK(art.unsup_updates == 0);
    cfg.arm = Arm::NoSSD;
    const auto none = train_unlabeled_phase(start, task, cfg);
    CHECK(same_params(art.model, none.model));
    CHECK(same_params(art.model, start.model));
}

TEST_CASE("ablation is independent of the job count") {
    const auto tcfg = small_task();
    const auto cfg = small_train();
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    const auto one = run_ablation(tcfg, cfg, seeds, 1);
    const auto many = run_ablation(tcfg, cfg, seeds, 3);
    std::ostringstream a, b, da, db;
    one.report.write_csv(a);
    many.report.write_csv(b);
    CHECK(a.str() == b.str());
    CHECK(one.report.rows.size() == 25);
    for (std::size_t i = 0; i < one.decisions.size(); ++i) {
        write_gate_decisions(da, Arm::NR, 1, one.decisions[i], i == 0);
        write_gate_decisions(db, Arm::NR, 1, many.decisions[i], i == 0);
    }
    CHECK(da.str() == db.str());
    CHECK(code_of([&] { run_ablation(tcfg, cfg, {1, 2, 3, 4}, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { run_arms(tcfg, cfg, {1}, {}, 1); }) == ErrorCode::InvalidArgument);
    CHECK(run_arms(tcfg, cfg, {9}, {Arm::ARTSS}, 1).report.rows.size() == 1);
}
