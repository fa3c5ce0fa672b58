#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "casp/error.hpp"
#include "casp/market_data.hpp"
#include "casp/rng.hpp"

using namespace casp;

namespace {

LoadedPrices parse(const std::string& text) {
    std::istringstream in(text);
    return parse_prices(in);
}

ReturnPanel panel_of(const Eigen::MatrixXd& returns) {
    ReturnPanel p;
    for (Eigen::Index i = 0; i < returns.cols(); ++i) p.asset_ids.push_back("A" + std::to_string(i));
    for (Eigen::Index t = 0; t < returns.rows(); ++t) p.dates.push_back(Date{2021, 1, static_cast<unsigned>(t + 1)});
    p.returns = returns;
    return p;
}

}  // namespace

TEST_CASE("dates parse and order") {
    CHECK(Date::parse("2024-02-29") == Date{2024, 2, 29});
    CHECK(Date::parse("2020-01-02").to_string() == "2020-01-02");
    CHECK(Date::parse("2020-01-02") < Date::parse("2020-01-03"));
    CHECK_THROWS_AS(Date::parse("2023-02-29"), FormatError);
    CHECK_THROWS_AS(Date::parse("2023/01/01"), FormatError);
    CHECK_THROWS_AS(Date::parse("20230101"), FormatError);
}

TEST_CASE("load prices: basic parse") {
    const auto loaded = parse("date,A,B\n2020-01-02,100,50\n2020-01-03,101,51\n2020-01-06,102,49.5\n");
    CHECK(loaded.history.num_dates() == 3);
    CHECK(loaded.history.num_assets() == 2);
    CHECK(loaded.dropped_rows == 0);
    CHECK(loaded.history.asset_ids == std::vector<std::string>{"A", "B"});
    CHECK(loaded.history.prices(2, 1) == 49.5);
}

TEST_CASE("load prices: rows with missing or invalid cells are dropped") {
    const auto loaded = parse(
        "date,A,B\n2020-01-02,100,50\n2020-01-03,,51\n2020-01-06,102,49.5\n2020-01-07,103,-1\n2020-01-08,x,2\n"
        "2020-01-09,104,52\n");
    CHECK(loaded.history.num_dates() == 3);
    CHECK(loaded.dropped_rows == 3);
    CHECK(loaded.history.dates.back() == Date{2020, 1, 9});
}

TEST_CASE("load prices: out-of-order dates are sorted") {
    const auto shuffled = parse("date,A\n2020-01-06,3\n2020-01-02,1\n2020-01-03,2\n");
    const auto sorted = parse("date,A\n2020-01-02,1\n2020-01-03,2\n2020-01-06,3\n");
    CHECK(shuffled.history.dates == sorted.history.dates);
    CHECK(shuffled.history.prices == sorted.history.prices);
}

TEST_CASE("load prices: errors") {
    CHECK_THROWS_AS(parse(""), FormatError);
    CHECK_THROWS_AS(parse("when,A,B\n2020-01-02,1,2\n2020-01-03,1,2\n"), FormatError);
    CHECK_THROWS_AS(parse("date\n2020-01-02\n2020-01-03\n"), FormatError);
    CHECK_THROWS_AS(parse("date,A,A\n2020-01-02,1,2\n2020-01-03,1,2\n"), FormatError);
    CHECK_THROWS_AS(parse("date,A,\n2020-01-02,1,2\n2020-01-03,1,2\n"), FormatError);
    CHECK_THROWS_AS(parse("date,A\n2020-01-02,1\n2020-01-02,2\n"), FormatError);
    CHECK_THROWS_AS(parse("date,A\n2020-01-02,1\n2020-01-03,0\n"), InsufficientDataError);
    CHECK_THROWS_AS(load_prices("/nonexistent/prices.csv"), IoError);
}

TEST_CASE("load prices from a file round-trips written prices") {
    const auto prices = synth_market(SynthSpec{4, 2, 3, 20});
    const auto path = std::filesystem::temp_directory_path() / "casp_test_prices.csv";
    {
        std::ofstream out(path);
        write_prices(out, prices);
    }
    const auto loaded = load_prices(path);
    std::filesystem::remove(path);
    CHECK(loaded.history.asset_ids == prices.asset_ids);
    CHECK(loaded.history.dates == prices.dates);
    CHECK((loaded.history.prices - prices.prices).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ESG inputs") {
    std::istringstream in("ticker,overall_risk,sector_proxy\nB,3,70\nA,0,81\n");
    const auto esg = parse_esg(in, {"A", "B"});
    CHECK(esg.overall_risk == std::vector<int>{0, 3});
    const auto composite = esg_composite(esg);
    CHECK(composite(0) == doctest::Approx(88.6));
    CHECK(composite(1) == doctest::Approx(0.4 * 70 + 0.6 * 70));

    std::istringstream missing("ticker,overall_risk,sector_proxy\nA,0,81\n");
    CHECK_THROWS_AS(parse_esg(missing, {"A", "B"}), FormatError);
    std::istringstream range("ticker,overall_risk,sector_proxy\nA,11,81\n");
    CHECK_THROWS_AS(parse_esg(range, {"A"}), FormatError);

    CHECK(esg_composite(neutral_esg(3)).isApprox(Eigen::VectorXd::Constant(3, 50.0)));

    // Composite stays inside [0, 100] for in-range inputs, including the corners.
    Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        const int risk = static_cast<int>(rng.below(11));
        const double proxy = trial % 10 == 0 ? 100.0 * static_cast<double>(trial % 20 == 0) : rng.uniform(0.0, 100.0);
        const double v = esg_composite(EsgInputs{{risk}, {proxy}})(0);
        CHECK(v >= 0.0);
        CHECK(v <= 100.0);
    }
    const auto synth = esg_composite(synth_esg(50, 9));
    CHECK(synth.minCoeff() >= 0.0);
    CHECK(synth.maxCoeff() <= 100.0);
}

TEST_CASE("compute returns") {
    const auto loaded = parse("date,A,B\n2020-01-02,100,100\n2020-01-03,100,110\n2020-01-06,100,121\n");
    const auto panel = compute_returns(loaded.history);
    CHECK(panel.num_observations() == 2);
    CHECK(panel.returns(0, 0) == 0.0);
    CHECK(panel.returns(0, 1) == doctest::Approx(0.0953101798).epsilon(1e-9));
    CHECK(panel.returns(0, 1) == std::log(110.0 / 100.0));
    CHECK(panel.dates.front() == Date{2020, 1, 3});

    PriceHistory one = loaded.history;
    one.dates.resize(1);
    one.prices.conservativeResize(1, 2);
    CHECK_THROWS_AS(compute_returns(one), InsufficientDataError);
}

TEST_CASE("estimate model: moments and shrinkage") {
    Eigen::MatrixXd r(4, 2);
    r << 0.01, 0.01, -0.02, -0.02, 0.03, 0.03, 0.00, 0.00;
    const auto model = estimate_model(panel_of(r), {0.0, 252.0}, neutral_esg(2));
    CHECK(model.omega(0, 1) == doctest::Approx(model.omega(0, 0)).epsilon(1e-14));
    CHECK(model.omega(1, 1) == doctest::Approx(model.omega(0, 0)).epsilon(1e-14));
    CHECK(model.mu(0) == doctest::Approx(252.0 * 0.005));

    // Sample variance with T-1 denominator, annualized.
    const double mean = 0.005;
    double ss = 0.0;
    for (double x : {0.01, -0.02, 0.03, 0.0}) ss += (x - mean) * (x - mean);
    CHECK(model.omega(0, 0) == doctest::Approx(252.0 * ss / 3.0).epsilon(1e-14));

    Rng rng(8);
    Eigen::MatrixXd noisy(50, 4);
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] = rng.normal(0.0, 0.01 * (1 + i % 4));
    const auto full = estimate_model(panel_of(noisy), {1.0, 252.0}, neutral_esg(4));
    const double scale = 252.0 * sample_covariance(noisy).trace() / 4.0;
    CHECK((full.omega - scale * Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-15 * scale);

    const auto partial = estimate_model(panel_of(noisy), {0.1, 252.0}, neutral_esg(4));
    const Eigen::MatrixXd s = 252.0 * sample_covariance(noisy);
    const Eigen::MatrixXd expected = 0.9 * s + 0.1 * scale * Eigen::MatrixXd::Identity(4, 4);
    CHECK((partial.omega - expected).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(partial.meta.condition_number == doctest::Approx(condition_number(expected)));
    // Total variance is preserved by the scaled-identity target.
    CHECK(partial.omega.trace() == doctest::Approx(s.trace()).epsilon(1e-13));
}

TEST_CASE("estimate model: zero-variance asset is floored with a warning") {
    Eigen::MatrixXd r(5, 2);
    r << 0.01, 0.0, -0.01, 0.0, 0.02, 0.0, 0.0, 0.0, 0.005, 0.0;
    const auto model = estimate_model(panel_of(r), {0.0, 252.0}, neutral_esg(2));
    CHECK(model.omega(1, 1) == 1e-10);
    CHECK(model.meta.warnings.size() == 1);
}

TEST_CASE("estimate model: errors") {
    Eigen::MatrixXd r(1, 2);
    r << 0.01, 0.02;
    CHECK_THROWS_AS(estimate_model(panel_of(r), {}, neutral_esg(2)), InsufficientDataError);
    Eigen::MatrixXd ok = Eigen::MatrixXd::Random(5, 2) * 0.01;
    CHECK_THROWS_AS(estimate_model(panel_of(ok), {1.5, 252.0}, neutral_esg(2)), ArgumentError);
    CHECK_THROWS_AS(estimate_model(panel_of(ok), {}, neutral_esg(3)), ArgumentError);
}

TEST_CASE("estimate model: conditioning improves with shrinkage and stays positive definite") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto prices = synth_market(SynthSpec{25, 3, seed, 120});
        const auto panel = compute_returns(prices);
        double previous = std::numeric_limits<double>::infinity();
        for (int step = 0; step <= 20; ++step) {
            const double shrinkage = 0.05 * step;
            const auto model = estimate_model(panel, {shrinkage, 252.0}, neutral_esg(25));
            CHECK(model.meta.condition_number <= previous * (1 + 1e-12));
            previous = model.meta.condition_number;
            if (shrinkage >= 0.01) {
                const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.omega);
                CHECK(eig.eigenvalues().minCoeff() > 0.0);
            }
            CHECK((model.omega - model.omega.transpose()).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("temporal split") {
    const auto prices = synth_market(SynthSpec{3, 1, 5, 10});
    const auto split = split_temporal(prices, prices.dates[6]);
    CHECK(split.train.num_observations() == 5);
    CHECK(split.test.num_observations() == 3);
    CHECK(split.train.dates.back() < split.boundary);
    CHECK(split.boundary <= split.test.dates.front());

    CHECK_THROWS_AS(split_temporal(prices, Date{2019, 12, 1}), ArgumentError);
    CHECK_THROWS_AS(split_temporal(prices, prices.dates.front()), ArgumentError);
    CHECK_THROWS_AS(split_temporal(prices, prices.dates.back()), ArgumentError);
    CHECK_THROWS_AS(split_temporal(prices, Date{2030, 1, 1}), ArgumentError);

    // Concatenated segments reproduce the panel.
    for (std::size_t cut = 1; cut < prices.num_dates(); ++cut) {
        const auto [train, test] = split_prices(prices, prices.dates[cut]);
        CHECK(train.num_dates() + test.num_dates() == prices.num_dates());
        Eigen::MatrixXd joined(prices.prices.rows(), prices.prices.cols());
        joined << train.prices, test.prices;
        CHECK(joined == prices.prices);
        auto dates = train.dates;
        dates.insert(dates.end(), test.dates.begin(), test.dates.end());
        CHECK(dates == prices.dates);
    }
}

TEST_CASE("synthetic market") {
    const SynthSpec spec{30, 5, 7, 500};
    const auto a = synth_market(spec);
    const auto b = synth_market(spec);
    CHECK(a.prices == b.prices);
    CHECK(a.dates == b.dates);
    CHECK(a.num_assets() == 30);
    CHECK(a.num_dates() == 500);
    CHECK_NOTHROW(a.validate());
    CHECK(synth_market(SynthSpec{30, 5, 8, 500}).prices != a.prices);

    // Factor structure gives a poorly conditioned sample covariance.
    const double cond = condition_number(sample_covariance(compute_returns(a).returns));
    MESSAGE("n_assets=30 seed=7 sample covariance condition number: " << cond);
    CHECK(cond > 10.0);

    // One factor and vanishing idiosyncratic noise: correlations approach 1.
    SynthSpec one{10, 1, 3, 300};
    one.idio_scale = 1e-6;
    const Eigen::MatrixXd cov = sample_covariance(compute_returns(synth_market(one)).returns);
    const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
    const Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
    CHECK(corr.cwiseAbs().minCoeff() > 0.999999);

    CHECK_THROWS_AS(synth_market(SynthSpec{1, 1, 1, 10}), ArgumentError);
    CHECK_THROWS_AS(synth_market(SynthSpec{5, 0, 1, 10}), ArgumentError);
    CHECK(a.dates.front() == Date{2020, 1, 2});
    CHECK(a.dates[2] == Date{2020, 1, 6});  // skips the weekend
}

TEST_CASE("market model JSON round-trip") {
    const auto prices = synth_market(SynthSpec{6, 2, 11, 60});
    const auto model = estimate_model(compute_returns(prices), {}, synth_esg(6, 11));
    const auto doc = to_json(model);
    CHECK(doc.contains("asset_ids"));
    CHECK(doc["omega"].size() == 36);
    CHECK(doc["meta"]["shrinkage"] == 0.1);
    const auto back = model_from_json(nlohmann::json::parse(doc.dump()));
    CHECK(back.asset_ids == model.asset_ids);
    CHECK(back.mu == model.mu);
    CHECK(back.omega == model.omega);
    CHECK(back.esg == model.esg);
    CHECK(back.meta.condition_number == model.meta.condition_number);
    CHECK_THROWS_AS(model_from_json(nlohmann::json::parse(R"({"asset_ids":["A"]})")), FormatError);
}
