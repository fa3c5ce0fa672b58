#include <doctest.h>

#include <cmath>
#include <set>

#include "casp/error.hpp"
#include "casp/mogwo.hpp"

using namespace casp;

namespace {

ArchiveMember member(double var, double ret, double esg) {
    ArchiveMember m;
    m.portfolio = Portfolio{{0}, Eigen::VectorXd::Ones(1)};
    m.objectives = {var, ret, esg};
    m.position = Eigen::VectorXd::Zero(1);
    return m;
}

void check_sound(const ParetoArchive& archive) {
    CHECK(archive.size() <= archive.capacity());
    CHECK(archive.cells().size() == archive.size());
    const auto& ms = archive.members();
    for (std::size_t i = 0; i < ms.size(); ++i) {
        for (std::size_t j = 0; j < ms.size(); ++j) {
            if (i == j) continue;
            CHECK_FALSE(dominates(ms[i].objectives, ms[j].objectives));
            CHECK_FALSE(ms[i].objectives == ms[j].objectives);
        }
    }
}

MarketModel synthetic_model(std::size_t n, std::uint64_t seed) {
    SynthSpec spec;
    spec.n_assets = n;
    spec.seed = seed;
    spec.horizon = 400;
    const auto prices = synth_market(spec);
    return estimate_model(compute_returns(prices), EstimationParams{}, synth_esg(n, seed));
}

}  // namespace

TEST_CASE("objective evaluation") {
    Rng rng(1);
    MarketModel m;
    const Eigen::Index n = 6;
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n);
    m.omega = a * a.transpose();
    m.mu = Eigen::VectorXd::Random(n);
    m.esg = 50.0 * (Eigen::VectorXd::Random(n).array() + 1.0);
    m.asset_ids.resize(static_cast<std::size_t>(n));

    const auto e = evaluate(Portfolio{{4}, Eigen::VectorXd::Ones(1)}, m);
    CHECK(e.variance == m.omega(4, 4));
    CHECK(e.ret == m.mu(4));
    CHECK(e.esg == m.esg(4));

    MarketModel id = m;
    id.omega = Eigen::MatrixXd::Identity(n, n);
    CHECK(evaluate(Portfolio{{1, 3}, Eigen::Vector2d(0.5, 0.5)}, id).variance == doctest::Approx(0.5));

    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::size_t> act;
        for (std::size_t i = 0; i < 6; ++i) {
            if (rng.uniform() < 0.5 || act.empty()) act.push_back(i);
        }
        Eigen::VectorXd w(static_cast<Eigen::Index>(act.size()));
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform();
        w /= w.sum();
        const auto obj = evaluate(Portfolio{act, w}, m);
        double var = 0.0, ret = 0.0, esg = 0.0;
        for (std::size_t i = 0; i < act.size(); ++i) {
            const auto ai = static_cast<Eigen::Index>(act[i]);
            ret += w(static_cast<Eigen::Index>(i)) * m.mu(ai);
            esg += w(static_cast<Eigen::Index>(i)) * m.esg(ai);
            for (std::size_t j = 0; j < act.size(); ++j) {
                var += w(static_cast<Eigen::Index>(i)) * m.omega(ai, static_cast<Eigen::Index>(act[j])) *
                       w(static_cast<Eigen::Index>(j));
            }
        }
        CHECK(std::abs(obj.variance - var) <= 1e-12);
        CHECK(std::abs(obj.ret - ret) <= 1e-12);
        CHECK(std::abs(obj.esg - esg) <= 1e-12 * 100.0);
    }
}

TEST_CASE("dominance") {
    CHECK(dominates({0.01, 0.2, 60}, {0.02, 0.1, 50}));
    CHECK_FALSE(dominates({0.01, 0.2, 60}, {0.01, 0.2, 60}));
    CHECK_FALSE(dominates({0.01, 0.1, 60}, {0.02, 0.2, 50}));
    CHECK(dominates({0.01, 0.2, 60}, {0.01, 0.2, 59}));
}

TEST_CASE("archive insertion") {
    ParetoArchive archive(30, 10);
    CHECK(archive.insert(member(0.02, 0.1, 50)));
    CHECK(archive.size() == 1);

    CHECK_FALSE(archive.insert(member(0.03, 0.05, 40)));
    CHECK_FALSE(archive.insert(member(0.02, 0.1, 50)));
    CHECK(archive.size() == 1);

    CHECK(archive.insert(member(0.01, 0.2, 60)));
    CHECK(archive.size() == 1);
    CHECK(archive.members()[0].objectives == Objectives{0.01, 0.2, 60});
}

TEST_CASE("archive capacity and crowding") {
    ParetoArchive archive(30, 10);
    // 40 points on a trade-off surface: variance rises with return, esg falls.
    for (int i = 0; i < 40; ++i) {
        const double t = i / 39.0;
        archive.insert(member(0.01 + 0.05 * t * t, 0.05 + 0.2 * t, 80.0 - 30.0 * std::sqrt(t)));
        check_sound(archive);
    }
    CHECK(archive.size() == 30);

    // Objective extremes survive crowding eviction.
    double min_var = 1e9, max_ret = -1e9, max_esg = -1e9;
    for (const auto& m : archive.members()) {
        min_var = std::min(min_var, m.objectives.variance);
        max_ret = std::max(max_ret, m.objectives.ret);
        max_esg = std::max(max_esg, m.objectives.esg);
    }
    CHECK(min_var == doctest::Approx(0.01));
    CHECK(max_ret == doctest::Approx(0.25));
    CHECK(max_esg == doctest::Approx(80.0));

    // A random stream keeps the archive sound throughout.
    Rng rng(3);
    ParetoArchive small(10, 5);
    for (int i = 0; i < 2000; ++i) {
        small.insert(member(rng.uniform(), rng.uniform(), rng.uniform()));
        if (i % 50 == 0) check_sound(small);
    }
    check_sound(small);
    CHECK(small.size() == 10);
}

TEST_CASE("leader selection") {
    ParetoArchive archive(30, 10);
    for (int i = 0; i < 12; ++i) {
        const double t = i / 11.0;
        archive.insert(member(0.01 + t, t, 1.0 - t));
    }
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = archive.select_leader(rng, {});
        const std::vector<std::size_t> ex1{a};
        const auto b = archive.select_leader(rng, ex1);
        const std::vector<std::size_t> ex2{a, b};
        const auto c = archive.select_leader(rng, ex2);
        CHECK(a < archive.size());
        CHECK(a != b);
        CHECK(c != a);
        CHECK(c != b);
    }

    ParetoArchive one(30, 10);
    one.insert(member(0.1, 0.1, 0.1));
    const std::vector<std::size_t> ex{0};
    CHECK(one.select_leader(rng, ex) == 0);
}

TEST_CASE("optimize: configuration errors") {
    const auto model = synthetic_model(8, 2);
    MogwoConfig cfg;
    cfg.population = 0;
    CHECK_THROWS_AS(optimize(model, ConstraintSet{3, 0.05, 0.6}, make_method(MethodName::CaspBasic), cfg), ConfigError);
    CHECK_THROWS_AS(optimize(model, ConstraintSet{3, 0.4, 0.6}, make_method(MethodName::CaspBasic), MogwoConfig{}),
                    InfeasibleConstraintsError);
}

TEST_CASE("optimize: single wolf, no iterations") {
    const auto model = synthetic_model(8, 2);
    MogwoConfig cfg;
    cfg.population = 1;
    cfg.iterations = 0;
    const ConstraintSet cons{3, 0.05, 0.6};
    const auto result = optimize(model, cons, make_method(MethodName::CaspBasic), cfg);
    REQUIRE(result.archive.size() == 1);
    const auto& m = result.archive.members()[0];
    const auto repaired = repair(m.position, model, cons, make_method(MethodName::CaspBasic));
    CHECK(repaired.portfolio.active == m.portfolio.active);
    CHECK(repaired.portfolio.weights == m.portfolio.weights);
    CHECK(m.objectives == evaluate(m.portfolio, model));
    REQUIRE(result.log.records.size() == 1);
    CHECK(result.log.records[0].iter == 0);
    CHECK(result.log.records[0].archive_size == 1);
}

TEST_CASE("optimize: deterministic for a fixed seed") {
    const auto model = synthetic_model(12, 4);
    const ConstraintSet cons{4, 0.05, 0.5};
    MogwoConfig cfg;
    cfg.population = 15;
    cfg.iterations = 10;
    cfg.seed = 99;
    const auto method = make_method(MethodName::RaCasp);
    const auto a = optimize(model, cons, method, cfg);
    const auto b = optimize(model, cons, method, cfg);
    CHECK(a.log.records == b.log.records);
    CHECK(a.log.to_jsonl() == b.log.to_jsonl());
    CHECK(to_json(a.archive).dump() == to_json(b.archive).dump());

    cfg.seed = 100;
    const auto c = optimize(model, cons, method, cfg);
    CHECK(to_json(a.archive).dump() != to_json(c.archive).dump());
}

TEST_CASE("optimize: archive is feasible and mutually non-dominated") {
    const auto model = synthetic_model(10, 6);
    const ConstraintSet cons{3, 0.05, 0.6};
    MogwoConfig cfg;
    cfg.population = 20;
    cfg.iterations = 20;
    for (const auto name : all_methods()) {
        const auto result = optimize(model, cons, make_method(name), cfg);
        check_sound(result.archive);
        for (const auto& m : result.archive.members()) {
            CHECK(is_feasible(m.portfolio, cons, 10).feasible);
            CHECK(m.objectives == evaluate(m.portfolio, model));
        }
        CHECK(result.log.records.size() == 21);
        for (std::size_t i = 0; i < result.log.records.size(); ++i) {
            const auto& r = result.log.records[i];
            CHECK(r.iter == i);
            CHECK(r.archive_size >= 1);
            CHECK(r.archive_size <= cfg.archive_capacity);
        }
    }
}

TEST_CASE("optimize: elitism without crowding") {
    const auto model = synthetic_model(10, 8);
    const ConstraintSet cons{3, 0.05, 0.6};
    MogwoConfig cfg;
    cfg.population = 8;
    cfg.iterations = 12;
    cfg.archive_capacity = cfg.population * (cfg.iterations + 1);
    const auto result = optimize(model, cons, make_method(MethodName::CaspRetSel), cfg);
    const auto& recs = result.log.records;
    for (std::size_t i = 1; i < recs.size(); ++i) {
        CHECK(recs[i].min_variance <= recs[i - 1].min_variance);
        CHECK(recs[i].max_return >= recs[i - 1].max_return);
    }
}

TEST_CASE("run log and archive serialization") {
    RunLog log;
    log.records.push_back({0, 3, 1.25, 0.01, 0.2});
    log.records.push_back({1, 4, 1.5, 0.009, 0.21});
    const auto text = log.to_jsonl();
    std::istringstream in(text);
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("iter").get<std::size_t>() == count);
        CHECK(j.contains("archive_size"));
        CHECK(j.contains("best_sharpe"));
        CHECK(j.contains("min_variance"));
        CHECK(j.contains("max_return"));
        ++count;
    }
    CHECK(count == 2);

    ParetoArchive archive(5, 10);
    archive.insert(member(0.1, 0.2, 30));
    const auto j = to_json(archive);
    CHECK(j.at("capacity") == 5);
    CHECK(j.at("members").size() == 1);
    CHECK(j.at("members")[0].at("variance") == 0.1);
}
