#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "artss/error.hpp"
#include "artss/latent_store.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace artss;
using namespace artss::latent;

namespace {

SampleSet parse_csv(const std::string& text) {
    std::istringstream in(text);
    return read_samples(in, Format::Csv);
}

LatentVector lv(std::vector<double> v) { return LatentVector(std::move(v)); }

}  // namespace

TEST_CASE("csv row parses into a record") {
    const auto set = parse_csv("a,1.0,0.0,0.5\n");
    REQUIRE(set.size() == 1);
    CHECK(set.dimension() == 2);
    CHECK(set[0].id == "a");
    CHECK(set[0].z == lv({1.0, 0.0}));
    CHECK(set[0].sigma == 0.5);
}

TEST_CASE("header row is skipped") {
    const auto set = parse_csv("id,z_1,z_2,sigma\na,1,2,1\n");
    CHECK(set.size() == 1);
}

TEST_CASE("ingest errors") {
    CHECK(code_of([] { parse_csv("a,1,0,0\n"); }) == ErrorCode::NonPositiveSigma);
    CHECK(code_of([] { parse_csv("a,1,0,-1\n"); }) == ErrorCode::NonPositiveSigma);
    CHECK(code_of([] { parse_csv("a,0,0,1\n"); }) == ErrorCode::ZeroVector);
    CHECK(code_of([] { parse_csv("a,1,x,1\n"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_csv("a,1,nan,1\n"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_csv("a,1\n"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_csv("a,1,0,1\na,0,1,1\n"); }) == ErrorCode::DuplicateId);
}

TEST_CASE("dimension mismatch reports the offending line") {
    try {
        parse_csv("a,1,0,1\nb,0,1,1\nc,1,1,1,1\n");
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("tiny sigma is clamped to the floor") {
    const auto set = parse_csv("a,1,0,1e-9\n");
    CHECK(set[0].sigma == kSigmaFloor);
}

TEST_CASE("jsonl parses") {
    std::istringstream in(R"({"id":"a","z":[1,0],"sigma":0.5})" "\n" R"({"id":"b","z":[0,2],"sigma":1})" "\n");
    const auto set = read_samples(in, Format::Jsonl);
    REQUIRE(set.size() == 2);
    CHECK(set[1].z == lv({0.0, 2.0}));
    std::istringstream bad(R"({"id":"a","z":[1,0]})" "\n");
    CHECK(code_of([&] { read_samples(bad, Format::Jsonl); }) == ErrorCode::MalformedRow);
}

TEST_CASE("cosine similarity examples") {
    CHECK(cosine_similarity(lv({1, 0}), lv({1, 0})) == 1.0);
    CHECK(cosine_similarity(lv({1, 0}), lv({0, 1})) == 0.0);
    CHECK(cosine_similarity(lv({1, 1}), lv({2, 2})) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(code_of([] { cosine_similarity(lv({1, 0}), lv({1, 0, 0})); }) == ErrorCode::DimensionMismatch);
    CHECK(code_of([] { lv({0, 0}); }) == ErrorCode::ZeroVector);
}

TEST_CASE("cosine similarity: symmetry, scale invariance, range") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + rng.uniform_index(12);
        std::vector<double> a(d), b(d);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        const double k = std::exp(rng.uniform(-5.0, 5.0));
        std::vector<double> ka(a);
        for (auto& v : ka) v *= k;
        const double ab = cosine_similarity(lv(a), lv(b));
        CHECK(ab == cosine_similarity(lv(b), lv(a)));
        CHECK(cosine_similarity(lv(ka), lv(b)) == doctest::Approx(ab).epsilon(1e-12));
        CHECK(ab >= -1.0);
        CHECK(ab <= 1.0);
    }
}

TEST_CASE("nearest neighbors examples") {
    SampleSet pool;
    pool.add({"a", lv({1, 0}), 1.0});
    pool.add({"b", lv({0, 1}), 1.0});
    const auto one = nearest_neighbors(lv({1, 0}), pool, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].id == "a");
    CHECK(one[0].similarity == 1.0);
    CHECK(nearest_neighbors(lv({1, 0}), pool, 10).size() == 2);
    CHECK(nearest_neighbors(lv({1, 0}), pool, 10, std::string("a")).front().id == "b");
    CHECK(code_of([] { nearest_neighbors(lv({1, 0}), SampleSet{}, 1); }) == ErrorCode::EmptyPool);
}

TEST_CASE("ties break by ascending id") {
    SampleSet pool;
    pool.add({"c", lv({1, 0}), 1.0});
    pool.add({"a", lv({2, 0}), 1.0});
    pool.add({"b", lv({3, 0}), 1.0});
    const auto nn = nearest_neighbors(lv({1, 0}), pool, 2);
    CHECK(nn[0].id == "a");
    CHECK(nn[1].id == "b");
}

TEST_CASE("nearest neighbors match a brute-force full sort") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = trial == 0 ? 8 : 1 + rng.uniform_index(10);
        const std::size_t n = trial == 0 ? 50 : 1 + rng.uniform_index(60);
        const auto pts = oracle::random_points(rng, n, d, "p");
        const auto set = oracle::to_set(pts, Pool::Labeled);
        const auto& query = pts[rng.uniform_index(n)];
        const std::size_t m = trial == 0 ? 5 : 1 + rng.uniform_index(n + 3);
        const bool exclude = rng.uniform() < 0.5;
        const auto got = nearest_neighbors(LatentVector(query.z), set, std::max<std::size_t>(1, m),
                                           exclude ? std::optional<std::string>(query.id) : std::nullopt);
        const auto want = oracle::knn(query.z, pts, std::max<std::size_t>(1, m), exclude ? &query.id : nullptr);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].id == want[i].id);
            CHECK(got[i].similarity == want[i].sim);
            if (i > 0) CHECK(got[i - 1].similarity >= got[i].similarity);
        }
    }
}

TEST_CASE("save and load round-trip bit-identically") {
    Rng rng(5);
    const auto set = oracle::to_set(oracle::random_points(rng, 30, 6, "s", 1e-3, 50.0), Pool::Labeled);
    const auto dir = std::filesystem::temp_directory_path() / "artss_roundtrip";
    std::filesystem::create_directories(dir);
    for (Format f : {Format::Csv, Format::Jsonl}) {
        const auto p1 = dir / (std::string("a.") + to_string(f));
        const auto p2 = dir / (std::string("b.") + to_string(f));
        save_samples(p1, set, f);
        const auto back = load_samples(p1, f);
        save_samples(p2, back, f);
        REQUIRE(back.size() == set.size());
        for (std::size_t i = 0; i < set.size(); ++i) {
            CHECK(back[i].id == set[i].id);
            CHECK(back[i].z == set[i].z);
            CHECK(back[i].sigma == set[i].sigma);
        }
        std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("missing file is an io error") {
    CHECK(code_of([] { load_samples("/nonexistent/x.csv", Format::Csv); }) == ErrorCode::Io);
}
