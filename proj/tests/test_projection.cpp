#include <doctest.h>

#include <cmath>

#include "casp/error.hpp"
#include "casp/projection.hpp"
#include "casp/rng.hpp"
#include "oracles.hpp"

using namespace casp;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index k) {
    Eigen::MatrixXd a(k, k);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal(0.0, 0.2);
    Eigen::MatrixXd m = a * a.transpose();
    m.diagonal().array() += rng.uniform(0.001, 0.05);
    return m;
}

Eigen::VectorXd random_candidate(Rng& rng, Eigen::Index k) {
    Eigen::VectorXd z(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double u = rng.uniform();
        z(i) = u < 0.1 ? rng.normal(0.0, 1e4) : rng.normal(0.3, 2.0);
    }
    return z;
}

bool on_simplex(const Eigen::VectorXd& w, double lower, double upper) {
    return std::abs(w.sum() - 1.0) <= 1e-8 && (w.array() >= lower - 1e-10).all() && (w.array() <= upper + 1e-10).all();
}

}  // namespace

TEST_CASE("constraint set validation") {
    CHECK_NOTHROW((ConstraintSet{15, 0.02, 0.15}.validate()));
    CHECK_NOTHROW((ConstraintSet{2, 0.5, 0.5}.validate()));
    CHECK_THROWS_AS((ConstraintSet{0, 0.0, 1.0}.validate()), InfeasibleConstraintsError);
    CHECK_THROWS_AS((ConstraintSet{5, 0.3, 0.5}.validate()), InfeasibleConstraintsError);
    CHECK_THROWS_AS((ConstraintSet{5, 0.0, 0.1}.validate()), InfeasibleConstraintsError);
    CHECK_THROWS_AS((ConstraintSet{5, 0.2, 0.1}.validate()), InfeasibleConstraintsError);
    CHECK_THROWS_AS((ConstraintSet{5, -0.1, 0.5}.validate()), InfeasibleConstraintsError);
}

TEST_CASE("simplex-box projection: spec examples") {
    const Eigen::VectorXd a = project_simplex_box(vec({0.5, 0.5}), 0.0, 1.0);
    CHECK(a(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a(1) == doctest::Approx(0.5).epsilon(1e-12));

    const Eigen::VectorXd b = project_simplex_box(vec({10.0, 0.0}), 0.0, 1.0);
    CHECK(b(0) == 1.0);
    CHECK(b(1) == 0.0);

    // Exhaustive grid search at resolution 1e-4 over the simplex.
    const Eigen::VectorXd z = vec({0.8, 0.6, 0.2});
    const auto grid = oracle::grid_min_exhaustive(z, Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), 0.0,
                                                  1.0, 1e-4);
    CHECK(grid.w(0) == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(grid.w(1) == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(grid.w(2) == doctest::Approx(0.0).epsilon(1e-9));
    const Eigen::VectorXd c = project_simplex_box(z, 0.0, 1.0);
    CHECK((c - grid.w).cwiseAbs().maxCoeff() <= 1e-4);
    CHECK(c(0) == doctest::Approx(0.6));
    CHECK(c(1) == doctest::Approx(0.4));
    CHECK(c(2) == 0.0);
}

TEST_CASE("simplex-box projection: errors") {
    CHECK_THROWS_AS(project_simplex_box(vec({1.0, 2.0}), 0.6, 1.0), InfeasibleConstraintsError);
    CHECK_THROWS_AS(project_simplex_box(vec({1.0, 2.0}), 0.0, 0.4), InfeasibleConstraintsError);
    CHECK_THROWS_AS(project_simplex_box(vec({1.0, 2.0}), 0.0, 1.0, 0.0), ArgumentError);
    CHECK_THROWS_AS(project_simplex_box(vec({1.0, NAN}), 0.0, 1.0), ArgumentError);
}

TEST_CASE("simplex-box projection: degenerate boxes") {
    // k * lower == 1: the only feasible point is all-lower.
    const Eigen::VectorXd w = project_simplex_box(vec({3.0, -1.0, 0.2, 9.0}), 0.25, 0.6);
    CHECK(on_simplex(w, 0.25, 0.6));
    const Eigen::VectorXd pinned = project_simplex_box(vec({3.0, -1.0}), 0.5, 0.5);
    CHECK(pinned(0) == 0.5);
    CHECK(pinned(1) == 0.5);
}

TEST_CASE("simplex-box projection: properties on random inputs") {
    Rng rng(17);
    for (int trial = 0; trial < 500; ++trial) {
        const auto k = static_cast<Eigen::Index>(2 + rng.below(12));
        const double lower = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 1.0 / static_cast<double>(k));
        const double upper = std::max(lower, rng.uniform(1.0 / static_cast<double>(k), 1.0));
        const Eigen::VectorXd z = random_candidate(rng, k);
        const Eigen::VectorXd w = project_simplex_box(z, lower, upper);
        REQUIRE(on_simplex(w, lower, upper));
        CHECK(std::abs(w.sum() - 1.0) <= 1e-10);

        // Idempotence.
        const Eigen::VectorXd again = project_simplex_box(w, lower, upper);
        CHECK((again - w).cwiseAbs().maxCoeff() <= 2e-10);

        // Translation invariance: the threshold absorbs a common shift.
        const double shift = rng.normal(0.0, 5.0);
        const Eigen::VectorXd shifted = project_simplex_box(z.array() + shift, lower, upper);
        CHECK((shifted - w).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, z.cwiseAbs().maxCoeff()));

        // Euclidean optimality: no feasible random point is closer to z.
        for (int probe = 0; probe < 5; ++probe) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
            for (Eigen::Index i = 0; i < k; ++i) v(i) = rng.uniform(-1.0, 2.0);
            const Eigen::VectorXd feasible = project_simplex_box(v, lower, upper);
            CHECK((w - z).squaredNorm() <= (feasible - z).squaredNorm() * (1 + 1e-12) + 1e-12);
        }
    }
}

TEST_CASE("omega projection: identity metric reduces to Euclidean") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = static_cast<Eigen::Index>(2 + rng.below(10));
        const Eigen::VectorXd z = random_candidate(rng, k);
        const double scale = std::exp(rng.uniform(-6.0, 3.0));
        const double lower = rng.uniform(0.0, 0.5 / static_cast<double>(k));
        const double upper = rng.uniform(1.5 / static_cast<double>(k), 1.0);
        const auto omega = project_omega(z, scale * Eigen::MatrixXd::Identity(k, k), lower, upper);
        const Eigen::VectorXd euclid = project_simplex_box(z, lower, upper);
        CHECK((omega.weights - euclid).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("omega projection: feasible input is a fixed point") {
    Rng rng(9);
    const Eigen::MatrixXd m = random_spd(rng, 4);
    const Eigen::VectorXd z = vec({0.1, 0.2, 0.3, 0.4});
    const auto p = project_omega(z, m, 0.05, 0.5);
    CHECK((p.weights - z).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(p.report.objective_value <= 1e-20);
    CHECK(p.report.kkt_residual <= 1e-9);
}

TEST_CASE("omega projection: two-asset line-scan oracle") {
    Eigen::MatrixXd m(2, 2);
    m << 0.04, 0.03, 0.03, 0.09;
    const Eigen::VectorXd z = vec({0.9, 0.4});
    // Parametric scan w = (t, 1 - t), t in [0, 1] at resolution 1e-6.
    double best_t = 0.0, best_f = 1e300;
    for (long i = 0; i <= 1000000; ++i) {
        const double t = i * 1e-6;
        const Eigen::VectorXd w = vec({t, 1.0 - t});
        const double f = 0.5 * (w - z).dot(m * (w - z));
        if (f < best_f) {
            best_f = f;
            best_t = t;
        }
    }
    CHECK(best_t == doctest::Approx(9.0 / 14.0).epsilon(1e-5));
    const auto p = project_omega(z, m, 0.0, 1.0);
    CHECK(std::abs(p.weights(0) - best_t) <= 1e-6);
    CHECK(std::abs(p.weights(1) - (1.0 - best_t)) <= 1e-6);
    CHECK(p.report.objective_value == doctest::Approx(best_f).epsilon(1e-8));
    CHECK_FALSE(p.report.regularized);
}

TEST_CASE("omega projection: matches the grid oracle for k = 2, 3") {
    Rng rng(23);
    const double h = 1e-4;
    for (int trial = 0; trial < 40; ++trial) {
        const auto k = static_cast<Eigen::Index>(2 + rng.below(2));
        const Eigen::MatrixXd m = random_spd(rng, k);
        const Eigen::VectorXd z = random_candidate(rng, k).cwiseMax(-3.0).cwiseMin(3.0);
        const double lower = 0.01 * static_cast<double>(rng.below(20));
        const double upper = std::max(lower, 0.6 + 0.01 * static_cast<double>(rng.below(41)));
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(k);
        const auto grid = oracle::grid_min_fast(z, m, zero, lower, upper, h);
        const auto p = project_omega(z, m, lower, upper);
        const double f = oracle::qp_objective(p.weights, z, m, zero);
        CHECK(f <= grid.value + 1e-12);
        CHECK(grid.value - f <= oracle::one_cell_slack(grid, z, m, zero, h));
    }
}

TEST_CASE("grid oracle: fast variant agrees with exhaustive enumeration") {
    Rng rng(31);
    for (int trial = 0; trial < 3; ++trial) {
        const Eigen::MatrixXd m = random_spd(rng, 3);
        const Eigen::VectorXd z = random_candidate(rng, 3).cwiseMax(-3.0).cwiseMin(3.0);
        const Eigen::VectorXd c = Eigen::VectorXd::Constant(3, 0.01);
        const auto slow = oracle::grid_min_exhaustive(z, m, c, 0.02, 0.9, 1e-3);
        const auto fast = oracle::grid_min_fast(z, m, c, 0.02, 0.9, 1e-3);
        CHECK(fast.value == doctest::Approx(slow.value).epsilon(1e-12));
    }
}

TEST_CASE("omega projection: properties on random inputs") {
    Rng rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        const auto k = static_cast<Eigen::Index>(2 + rng.below(15));
        const Eigen::MatrixXd m = random_spd(rng, k);
        const Eigen::VectorXd z = random_candidate(rng, k);
        const double lower = rng.uniform(0.0, 0.9 / static_cast<double>(k));
        const double upper = rng.uniform(1.1 / static_cast<double>(k), 1.0);
        const auto p = project_omega(z, m, lower, upper);
        REQUIRE(on_simplex(p.weights, lower, upper));
        CHECK(p.report.kkt_residual >= 0.0);
        CHECK(p.report.objective_value >= 0.0);

        // The covariance-metric minimizer is never beaten in that metric by the Euclidean point.
        const Eigen::VectorXd e = project_simplex_box(z, lower, upper);
        const double fo = 0.5 * (p.weights - z).dot(m * (p.weights - z));
        const double fe = 0.5 * (e - z).dot(m * (e - z));
        CHECK(fo <= fe * (1 + 1e-10) + 1e-12);

        // Idempotence.
        const auto again = project_omega(p.weights, m, lower, upper);
        CHECK((again.weights - p.weights).cwiseAbs().maxCoeff() <= 2e-9);
    }
}

TEST_CASE("omega projection: linear term shifts weight toward rewarded assets") {
    Eigen::MatrixXd m(3, 3);
    m << 0.04, 0.01, 0.0, 0.01, 0.05, 0.01, 0.0, 0.01, 0.06;
    const Eigen::VectorXd z = vec({0.5, 0.5, 0.5});
    const auto base = project_omega(z, m, 0.0, 1.0);
    const auto biased = project_omega(z, m, 0.0, 1.0, vec({0.0, 0.0, 0.01}));
    CHECK(biased.weights(2) > base.weights(2));

    const double h = 1e-4;
    const Eigen::VectorXd c = vec({0.0, 0.0, 0.01});
    const auto grid = oracle::grid_min_fast(z, m, c, 0.0, 1.0, h);
    const double f = oracle::qp_objective(biased.weights, z, m, c);
    CHECK(f <= grid.value + 1e-12);
    CHECK(grid.value - f <= oracle::one_cell_slack(grid, z, m, c, h));
}

TEST_CASE("omega projection: singular and asymmetric covariance") {
    // Rank-one block: the ridge kicks in and the flag is set.
    Eigen::VectorXd v = vec({0.2, 0.3, 0.25});
    const Eigen::MatrixXd rank1 = v * v.transpose();
    const auto p = project_omega(vec({0.7, 0.2, 0.4}), rank1, 0.0, 1.0);
    CHECK(p.report.regularized);
    CHECK(on_simplex(p.weights, 0.0, 1.0));

    // A slightly asymmetric block is treated as its symmetric part.
    Eigen::MatrixXd m(2, 2);
    m << 0.04, 0.031, 0.029, 0.09;
    Eigen::MatrixXd sym(2, 2);
    sym << 0.04, 0.03, 0.03, 0.09;
    const auto a = project_omega(vec({0.9, 0.4}), m, 0.0, 1.0);
    const auto b = project_omega(vec({0.9, 0.4}), sym, 0.0, 1.0);
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("omega projection: errors") {
    CHECK_THROWS_AS(project_omega(vec({1.0, 2.0}), Eigen::MatrixXd::Identity(3, 3), 0.0, 1.0), ArgumentError);
    CHECK_THROWS_AS(project_omega(vec({1.0, 2.0}), Eigen::MatrixXd::Identity(2, 2), 0.7, 1.0),
                    InfeasibleConstraintsError);
}

TEST_CASE("feasibility predicate") {
    const ConstraintSet c{2, 0.02, 0.8};
    Portfolio ok{{0, 1}, vec({0.5, 0.5})};
    CHECK(is_feasible(ok, c, 2).feasible);

    Portfolio budget{{0, 1}, vec({0.5, 0.49})};
    const auto rb = is_feasible(budget, c, 2);
    CHECK_FALSE(rb.feasible);
    CHECK(rb.has(ViolationKind::Budget));

    Portfolio too_many{{0, 1, 2}, vec({0.4, 0.3, 0.3})};
    const auto rc = is_feasible(too_many, c, 3);
    CHECK_FALSE(rc.feasible);
    CHECK(rc.has(ViolationKind::Cardinality));

    Portfolio box{{0, 1}, vec({0.9, 0.1})};
    CHECK(is_feasible(box, c, 2).has(ViolationKind::UpperBound));
    Portfolio low{{0, 1}, vec({0.99, 0.01})};
    CHECK(is_feasible(low, ConstraintSet{2, 0.02, 1.0}, 2).has(ViolationKind::LowerBound));

    Portfolio unsorted{{1, 0}, vec({0.5, 0.5})};
    CHECK(is_feasible(unsorted, c, 2).has(ViolationKind::Ordering));
    Portfolio out_of_range{{0, 5}, vec({0.5, 0.5})};
    CHECK(is_feasible(out_of_range, c, 2).has(ViolationKind::IndexRange));
}

TEST_CASE("omega projection: projected-gradient fallback reaches the same point") {
    Rng rng(77);
    int used = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const auto k = static_cast<Eigen::Index>(3 + rng.below(8));
        const Eigen::MatrixXd m = random_spd(rng, k);
        Eigen::VectorXd z(k);
        for (Eigen::Index i = 0; i < k; ++i) z(i) = rng.uniform(-1.0, 2.0);
        const auto exact = project_omega(z, m, 0.0, 0.5);
        QpOptions forced;
        forced.active_set_iterations = 1;
        const auto fallback = project_omega(z, m, 0.0, 0.5, forced);
        if (!fallback.report.fallback_used) continue;  // one step can already be optimal
        ++used;
        CHECK(fallback.report.kkt_residual <= 1e-9 * std::max(1.0, (m * (exact.weights - z)).cwiseAbs().maxCoeff()));
        CHECK((fallback.weights - exact.weights).cwiseAbs().maxCoeff() <= 1e-5);
    }
    CHECK(used > 10);
}
