#include <doctest.h>

#include <set>
#include <sstream>

#include "artss/rejection.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace artss;
using namespace artss::latent;
using namespace artss::rejection;

namespace {

LatentVector lv(std::vector<double> v) { return LatentVector(std::move(v)); }

SampleSet pool_of(std::initializer_list<std::pair<std::vector<double>, double>> items,
                  Pool pool = Pool::Labeled, const std::string& prefix = "l") {
    SampleSet set;
    std::size_t i = 0;
    for (const auto& [z, sigma] : items) set.add({prefix + std::to_string(i++), lv(z), sigma, pool});
    return set;
}

}  // namespace

TEST_CASE("similarity index examples") {
    CHECK(similarity_index(lv({1, 0}), pool_of({{{1, 0}, 1}, {{1, 0}, 1}}), 2).psi == 1.0);
    const auto s = similarity_index(lv({0, 1}), pool_of({{{1, 0}, 1}, {{-1, 0}, 1}}), 2);
    CHECK(s.psi == 0.0);
    CHECK(s.m_used == 2);
    CHECK(code_of([] { similarity_index(lv({1, 0}), SampleSet{}, 2); }) == ErrorCode::EmptyPool);
    CHECK(code_of([] { similarity_index(lv({1, 0, 0}), pool_of({{{1, 0}, 1}}), 1); }) ==
          ErrorCode::DimensionMismatch);
}

TEST_CASE("labeled record excludes itself") {
    const auto labeled = pool_of({{{1, 0}, 1}, {{0, 1}, 1}});
    CHECK(similarity_index(labeled[0], labeled, 1).psi == 0.0);
    SampleRecord outside{"l0", lv({1, 0}), 1.0, Pool::Unlabeled};
    CHECK(similarity_index(outside, labeled, 1).psi == 1.0);
}

TEST_CASE("similarity index matches brute force on random pools") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = trial == 0 ? 20 : 2 + rng.uniform_index(40);
        const std::size_t d = trial == 0 ? 4 : 1 + rng.uniform_index(8);
        const std::size_t m = trial == 0 ? 5 : 1 + rng.uniform_index(10);
        const auto pts = oracle::random_points(rng, n, d, "l");
        const auto q = oracle::random_points(rng, 1, d, "q");
        const auto got = similarity_index(lv(q[0].z), oracle::to_set(pts, Pool::Labeled), m);
        CHECK(got.psi == doctest::Approx(oracle::psi(q[0].z, pts, m, nullptr)).epsilon(1e-14));
        CHECK(got.m_used == std::min(m, n));
    }
}

TEST_CASE("threshold examples") {
    const auto uniform = compute_threshold(pool_of({{{1, 0}, 1}, {{1, 0}, 1}}), 1, 0);
    CHECK(uniform.threshold == 1.0);
    const auto weighted = compute_threshold(pool_of({{{1, 0}, 1}, {{1, 0}, 2}}), 1, 3);
    CHECK(weighted.threshold == 0.75);
    CHECK(weighted.epoch == 3);
    CHECK(weighted.labeled_count() == 2);
    CHECK(code_of([] { compute_threshold(pool_of({{{1, 0}, 1}}), 1, 0); }) == ErrorCode::PoolTooSmall);
    CHECK(code_of([] { compute_threshold(pool_of({{{1, 0}, 1}, {{1, 0}, 1}}), 0, 0); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("m_nn is clamped to N_l - 1") {
    const auto state = compute_threshold(pool_of({{{1, 0}, 1}, {{0, 1}, 1}, {{1, 1}, 1}}), 8, 0);
    CHECK(state.m_nn == 2);
}

TEST_CASE("threshold matches literal recomputation") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = trial == 0 ? 10 : 2 + rng.uniform_index(30);
        const auto pts = oracle::random_points(rng, n, 1 + rng.uniform_index(6), "l");
        const std::size_t m = 1 + rng.uniform_index(9);
        const auto state = compute_threshold(oracle::to_set(pts, Pool::Labeled), m, 0);
        CHECK(state.threshold == doctest::Approx(oracle::threshold(pts, m)).epsilon(1e-13));
        // The stored maps reproduce T exactly.
        double sum = 0.0;
        for (const auto& [id, psi] : state.labeled_psi) sum += psi / state.labeled_sigma.at(id);
        CHECK(state.threshold == sum / static_cast<double>(state.labeled_count()));
    }
}

TEST_CASE("should_reject examples") {
    ThresholdState state;
    state.threshold = 0.75;
    CHECK(should_reject(0.9, 1.0, state).accepted);
    CHECK_FALSE(should_reject(0.5, 1.0, state).accepted);
    const auto d = should_reject(0.9, 2.0, state);
    CHECK(d.score == 0.45);
    CHECK_FALSE(d.accepted);
    CHECK(should_reject(0.75, 1.0, state).accepted);  // boundary accepted
}

TEST_CASE("should_reject is monotone in psi and sigma") {
    Rng rng(9);
    ThresholdState state;
    for (int i = 0; i < 1000; ++i) {
        state.threshold = rng.uniform(-2.0, 2.0);
        const double psi = rng.uniform(-1.0, 1.0);
        const double sigma = rng.uniform(0.01, 3.0);
        const bool base = should_reject(psi, sigma, state).accepted;
        if (base) {
            CHECK(should_reject(std::min(1.0, psi + rng.uniform(0.0, 0.5)), sigma, state).accepted);
            if (psi >= 0.0) CHECK(should_reject(psi, sigma * rng.uniform(0.1, 1.0), state).accepted);
        }
    }
}

TEST_CASE("filter examples") {
    const auto labeled = pool_of({{{1, 0}, 1}, {{2, 0}, 1}, {{1, 0.1}, 1}});
    const auto orthogonal = pool_of({{{0, 1}, 1}, {{0, 3}, 1}}, Pool::Unlabeled, "u");
    const auto all_out = filter_unlabeled(orthogonal, labeled, 2, 0);
    CHECK(all_out.state.threshold > 0.0);
    CHECK(all_out.accepted.empty());
    CHECK(all_out.rejected.size() == 2);

    const auto empty = filter_unlabeled(SampleSet{}, labeled, 2, 0);
    CHECK(empty.accepted.empty());
    CHECK(empty.rejected.empty());
    CHECK(empty.decisions.empty());
}

TEST_CASE("in-distribution pool with unit sigma splits both ways") {
    Rng rng(41);
    const auto centers = oracle::random_centers(rng, 6);
    const auto lab = oracle::points_around(rng, centers, 60, "l", 1.0, 1.0);
    const auto unlabeled = oracle::points_around(rng, centers, 120, "u", 1.0, 1.0);
    const auto r = filter_unlabeled(oracle::to_set(unlabeled, Pool::Unlabeled), oracle::to_set(lab, Pool::Labeled), 8, 0);
    CHECK_FALSE(r.accepted.empty());
    CHECK_FALSE(r.rejected.empty());
}

TEST_CASE("invariants on random pools") {
    Rng rng(1234);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t d = 1 + rng.uniform_index(10);
        const auto lpts = oracle::random_points(rng, 2 + rng.uniform_index(50), d, "l");
        const auto upts = oracle::random_points(rng, rng.uniform_index(80), d, "u");
        const std::size_t m = 1 + rng.uniform_index(10);
        const auto labeled = oracle::to_set(lpts, Pool::Labeled);
        const auto unlabeled = oracle::to_set(upts, Pool::Unlabeled);
        const auto base = filter_unlabeled(unlabeled, labeled, m, 0);

        // Partition: sizes add up, ids disjoint, each id decided once.
        CHECK(base.accepted.size() + base.rejected.size() == unlabeled.size());
        CHECK(base.decisions.size() == unlabeled.size());
        std::set<std::string> ids;
        for (const auto& r : base.accepted) ids.insert(r.id);
        for (const auto& r : base.rejected) CHECK(ids.insert(r.id).second);
        for (const auto& dcs : base.decisions) {
            CHECK(dcs.psi >= -1.0);
            CHECK(dcs.psi <= 1.0);
            CHECK(dcs.accepted == (dcs.score >= base.state.threshold));
        }
        for (const auto& [id, psi] : base.state.labeled_psi) {
            CHECK(psi >= -1.0);
            CHECK(psi <= 1.0);
        }

        // Uniform sigma scaling leaves decisions unchanged.
        for (double k : {0.1, 1.0, 10.0}) {
            auto ls = lpts, us = upts;
            for (auto& p : ls) p.sigma *= k;
            for (auto& p : us) p.sigma *= k;
            const auto scaled = filter_unlabeled(oracle::to_set(us, Pool::Unlabeled),
                                                 oracle::to_set(ls, Pool::Labeled), m, 0);
            for (std::size_t i = 0; i < upts.size(); ++i) {
                CHECK(scaled.decisions[i].accepted == base.decisions[i].accepted);
            }
        }

        // Constant sigma reduces to psi_u >= mean(psi_l).
        const double c = rng.uniform(0.1, 5.0);
        auto ls = lpts, us = upts;
        for (auto& p : ls) p.sigma = c;
        for (auto& p : us) p.sigma = c;
        const auto flat = filter_unlabeled(oracle::to_set(us, Pool::Unlabeled),
                                           oracle::to_set(ls, Pool::Labeled), m, 0);
        const double mean_psi = flat.state.mean_psi();
        for (const auto& dcs : flat.decisions) {
            // Compare away from the boundary where the two roundings may differ.
            if (std::abs(dcs.psi - mean_psi) > 1e-12) CHECK(dcs.accepted == (dcs.psi >= mean_psi));
        }
    }
}

TEST_CASE("decisions match the brute-force rule") {
    Rng rng(555);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng.uniform_index(16);
        const auto lpts = oracle::random_points(rng, 2 + rng.uniform_index(99), d, "l");
        const auto upts = oracle::random_points(rng, rng.uniform_index(201), d, "u");
        const std::size_t m = 1 + rng.uniform_index(12);
        const auto got = filter_unlabeled(oracle::to_set(upts, Pool::Unlabeled),
                                          oracle::to_set(lpts, Pool::Labeled), m, 0);
        const auto want = oracle::decisions(upts, lpts, m);
        for (std::size_t i = 0; i < upts.size(); ++i) CHECK(got.decisions[i].accepted == want[i]);
    }
}

TEST_CASE("decision csv is deterministic") {
    Rng rng(8);
    const auto lpts = oracle::random_points(rng, 20, 3, "l");
    const auto upts = oracle::random_points(rng, 20, 3, "u");
    std::string first;
    for (int run = 0; run < 2; ++run) {
        const auto r = filter_unlabeled(oracle::to_set(upts, Pool::Unlabeled),
                                        oracle::to_set(lpts, Pool::Labeled), 4, 1);
        std::ostringstream out;
        write_decisions_csv(out, r.decisions);
        if (run == 0) {
            first = out.str();
            CHECK(first.rfind("id,psi,sigma,score,threshold,accepted,epoch\n", 0) == 0);
        } else {
            CHECK(out.str() == first);
        }
    }
}
