#include "casp/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "casp/error.hpp"

namespace casp {

namespace {

constexpr double kSnap = 1e-12;
constexpr double kMinEigenvalue = 1e-8;
constexpr double kBracketWidth = 1e-12;
constexpr int kMaxBisections = 200;
constexpr std::size_t kFallbackIterations = 200000;

void check_box(std::size_t k, double lower, double upper) {
    if (k == 0) throw InfeasibleConstraintsError("projection onto an empty active set");
    if (!(lower <= upper)) throw InfeasibleConstraintsError("lower bound exceeds upper bound");
    const double kd = static_cast<double>(k);
    // A little slack so that k*lower == 1 with round-off still counts as feasible.
    if (kd * lower > 1.0 + 1e-12 || kd * upper < 1.0 - 1e-12) {
        std::ostringstream os;
        os << "box-constrained simplex is empty: k=" << k << ", lower=" << lower << ", upper=" << upper;
        throw InfeasibleConstraintsError(os.str());
    }
}

double clipped_sum(const Eigen::Ref<const Eigen::VectorXd>& z, double tau, double lower, double upper) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += std::clamp(z(i) - tau, lower, upper);
    return s;
}

void snap_to_bounds(Eigen::VectorXd& w, double lower, double upper) {
    for (auto& x : w) {
        if (std::abs(x - lower) <= kSnap) x = lower;
        if (std::abs(x - upper) <= kSnap) x = upper;
    }
}

enum class Bound { Free, Lower, Upper };

struct KktState {
    double residual = 0.0;
    double scale = 1.0;
};

// Stationarity, dual sign and primal residuals at w for the given working set.
KktState kkt_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& grad, double lower, double upper) {
    const auto k = w.size();
    // Classify by position, not by working set, so the residual is solver-agnostic.
    std::vector<Bound> state(static_cast<std::size_t>(k));
    double free_sum = 0.0;
    int free_count = 0;
    double nu_lo = -std::numeric_limits<double>::infinity();
    double nu_hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < k; ++i) {
        auto& s = state[static_cast<std::size_t>(i)];
        if (lower == upper || w(i) <= lower + kSnap) {
            s = Bound::Lower;
            nu_lo = std::max(nu_lo, -grad(i));
        } else if (w(i) >= upper - kSnap) {
            s = Bound::Upper;
            nu_hi = std::min(nu_hi, -grad(i));
        } else {
            s = Bound::Free;
            free_sum += -grad(i);
            ++free_count;
        }
    }
    double nu = 0.0;
    if (free_count > 0) {
        nu = free_sum / free_count;
    } else if (std::isfinite(nu_lo) && std::isfinite(nu_hi)) {
        nu = nu_lo <= nu_hi ? nu_lo : 0.5 * (nu_lo + nu_hi);
    } else if (std::isfinite(nu_lo)) {
        nu = nu_lo;
    } else if (std::isfinite(nu_hi)) {
        nu = nu_hi;
    }
    double r = std::abs(w.sum() - 1.0);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double m = grad(i) + nu;
        switch (state[static_cast<std::size_t>(i)]) {
            case Bound::Free: r = std::max(r, std::abs(m)); break;
            case Bound::Lower: r = std::max(r, std::max(0.0, -m)); break;
            case Bound::Upper: r = std::max(r, std::max(0.0, m)); break;
        }
        r = std::max(r, std::max(0.0, lower - w(i)));
        r = std::max(r, std::max(0.0, w(i) - upper));
    }
    return KktState{r, std::max(1.0, grad.cwiseAbs().maxCoeff())};
}

struct ActiveSetOutcome {
    bool converged = false;
    std::size_t iterations = 0;
};

// Primal active-set method for min 0.5 (w - z)' M (w - z) - c' w subject to
// sum w = 1 and lower <= w <= upper. w must be feasible on entry.
ActiveSetOutcome active_set(Eigen::VectorXd& w, const Eigen::VectorXd& z, const Eigen::MatrixXd& m,
                            const Eigen::VectorXd& c, double lower, double upper, std::size_t max_iterations) {
    const auto k = w.size();
    std::vector<Bound> state(static_cast<std::size_t>(k), Bound::Free);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (w(i) <= lower) state[static_cast<std::size_t>(i)] = Bound::Lower;
        else if (w(i) >= upper) state[static_cast<std::size_t>(i)] = Bound::Upper;
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff() * (1.0 + z.cwiseAbs().maxCoeff()) +
                                           c.cwiseAbs().maxCoeff());
    const double step_tol = 1e-13;
    const double dual_tol = 1e-13 * scale;

    std::vector<Eigen::Index> free_idx;
    for (std::size_t iter = 1; iter <= max_iterations; ++iter) {
        const Eigen::VectorXd grad = m * (w - z) - c;
        free_idx.clear();
        for (Eigen::Index i = 0; i < k; ++i) {
            if (state[static_cast<std::size_t>(i)] == Bound::Free) free_idx.push_back(i);
        }
        const auto nf = static_cast<Eigen::Index>(free_idx.size());

        Eigen::VectorXd p;
        double nu = 0.0;
        bool nu_known = false;
        if (nf > 0) {
            Eigen::MatrixXd mff(nf, nf);
            Eigen::VectorXd gf(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                gf(a) = grad(free_idx[static_cast<std::size_t>(a)]);
                for (Eigen::Index b = 0; b < nf; ++b) {
                    mff(a, b) = m(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
                }
            }
            // Equality-constrained step: M_FF p + nu 1 = -g_F, 1' p = 0.
            const Eigen::LLT<Eigen::MatrixXd> llt(mff);
            const Eigen::VectorXd minv_g = llt.solve(gf);
            const Eigen::VectorXd minv_1 = llt.solve(Eigen::VectorXd::Ones(nf));
            nu = -minv_g.sum() / minv_1.sum();
            nu_known = true;
            p = -(minv_g + nu * minv_1);
        }

        if (nf == 0 || p.cwiseAbs().maxCoeff() <= step_tol) {
            if (!nu_known) {
                double nu_lo = -std::numeric_limits<double>::infinity();
                double nu_hi = std::numeric_limits<double>::infinity();
                for (Eigen::Index i = 0; i < k; ++i) {
                    if (state[static_cast<std::size_t>(i)] == Bound::Lower) nu_lo = std::max(nu_lo, -grad(i));
                    else nu_hi = std::min(nu_hi, -grad(i));
                }
                if (nu_lo <= nu_hi) return {true, iter};
                nu = 0.5 * (nu_lo + nu_hi);
            }
            // Release the bound with the most negative multiplier.
            Eigen::Index worst = -1;
            double worst_value = -dual_tol;
            for (Eigen::Index i = 0; i < k; ++i) {
                const auto s = state[static_cast<std::size_t>(i)];
                double mult = 0.0;
                if (s == Bound::Lower) mult = grad(i) + nu;
                else if (s == Bound::Upper) mult = -(grad(i) + nu);
                else continue;
                if (mult < worst_value) {
                    worst_value = mult;
                    worst = i;
                }
            }
            if (worst < 0 || lower == upper) return {true, iter};
            state[static_cast<std::size_t>(worst)] = Bound::Free;
            continue;
        }

        double alpha = 1.0;
        Eigen::Index blocking = -1;
        Bound blocking_bound = Bound::Free;
        for (Eigen::Index a = 0; a < nf; ++a) {
            const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
            if (p(a) < 0.0) {
                const double t = (lower - w(i)) / p(a);
                if (t < alpha) {
                    alpha = std::max(t, 0.0);
                    blocking = i;
                    blocking_bound = Bound::Lower;
                }
            } else if (p(a) > 0.0) {
                const double t = (upper - w(i)) / p(a);
                if (t < alpha) {
                    alpha = std::max(t, 0.0);
                    blocking = i;
                    blocking_bound = Bound::Upper;
                }
            }
        }
        for (Eigen::Index a = 0; a < nf; ++a) w(free_idx[static_cast<std::size_t>(a)]) += alpha * p(a);
        if (blocking >= 0) {
            w(blocking) = blocking_bound == Bound::Lower ? lower : upper;
            state[static_cast<std::size_t>(blocking)] = blocking_bound;
        }
        for (Eigen::Index i = 0; i < k; ++i) w(i) = std::clamp(w(i), lower, upper);
    }
    return {false, max_iterations};
}

// Projected gradient with step 1/L; the projection is the Euclidean one.
std::size_t projected_gradient(Eigen::VectorXd& w, const Eigen::VectorXd& z, const Eigen::MatrixXd& m,
                               const Eigen::VectorXd& c, double lower, double upper, double tol) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const double lipschitz = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
    for (std::size_t iter = 1; iter <= kFallbackIterations; ++iter) {
        const Eigen::VectorXd grad = m * (w - z) - c;
        Eigen::VectorXd next = project_simplex_box(w - grad / lipschitz, lower, upper);
        snap_to_bounds(next, lower, upper);
        const bool stalled = (next - w).cwiseAbs().maxCoeff() <= 1e-16;
        w = std::move(next);
        if (stalled) return iter;
        if (iter % 64 == 0) {
            const auto kkt = kkt_residual(w, m * (w - z) - c, lower, upper);
            if (kkt.residual <= tol * kkt.scale) return iter;
        }
    }
    return kFallbackIterations;
}

}  // namespace

void ConstraintSet::validate() const {
    if (k < 1) throw InfeasibleConstraintsError("cardinality k must be at least 1");
    if (!(lower >= 0.0 && lower <= upper && upper <= 1.0)) {
        std::ostringstream os;
        os << "weight bounds must satisfy 0 <= lower <= upper <= 1, got [" << lower << ", " << upper << "]";
        throw InfeasibleConstraintsError(os.str());
    }
    check_box(k, lower, upper);
}

Eigen::VectorXd Portfolio::dense(std::size_t n) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < active.size(); ++j) {
        out(static_cast<Eigen::Index>(active[j])) = weights(static_cast<Eigen::Index>(j));
    }
    return out;
}

Eigen::VectorXd project_simplex_box(const Eigen::Ref<const Eigen::VectorXd>& z, double lower, double upper,
                                    double tol) {
    const auto k = z.size();
    check_box(static_cast<std::size_t>(k), lower, upper);
    if (!(tol > 0.0)) throw ArgumentError("projection tolerance must be positive");
    if (!z.allFinite()) throw ArgumentError("candidate contains non-finite entries");

    // sum(clip(z - tau)) is non-increasing in tau; k*upper >= 1 at the low end
    // of the bracket and k*lower <= 1 at the high end.
    double lo = z.minCoeff() - upper;
    double hi = z.maxCoeff() - lower;
    double tau = 0.5 * (lo + hi);
    for (int it = 0; it < kMaxBisections && hi - lo > kBracketWidth; ++it) {
        tau = 0.5 * (lo + hi);
        if (tau == lo || tau == hi) break;
        const double s = clipped_sum(z, tau, lower, upper);
        if (std::abs(s - 1.0) < tol) break;
        if (s > 1.0) lo = tau;
        else hi = tau;
    }

    // Given the clipping pattern at tau, the threshold is available in closed
    // form; use it when the pattern is unchanged.
    double fixed_sum = 0.0, free_sum = 0.0;
    int free_count = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double v = z(i) - tau;
        if (v <= lower) fixed_sum += lower;
        else if (v >= upper) fixed_sum += upper;
        else {
            free_sum += z(i);
            ++free_count;
        }
    }
    if (free_count > 0) {
        const double exact = (free_sum - (1.0 - fixed_sum)) / free_count;
        bool same_pattern = true;
        for (Eigen::Index i = 0; i < k && same_pattern; ++i) {
            const double before = z(i) - tau, after = z(i) - exact;
            if (before <= lower) same_pattern = after <= lower + kSnap;
            else if (before >= upper) same_pattern = after >= upper - kSnap;
            else same_pattern = after >= lower - kSnap && after <= upper + kSnap;
        }
        if (same_pattern) tau = exact;
    }

    Eigen::VectorXd w(k);
    for (Eigen::Index i = 0; i < k; ++i) w(i) = std::clamp(z(i) - tau, lower, upper);
    snap_to_bounds(w, lower, upper);
    return w;
}

OmegaProjection project_omega(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::MatrixXd>& omega,
                              double lower, double upper, const Eigen::Ref<const Eigen::VectorXd>& linear,
                              const QpOptions& options) {
    const auto k = z.size();
    check_box(static_cast<std::size_t>(k), lower, upper);
    if (omega.rows() != k || omega.cols() != k) throw ArgumentError("covariance block does not match candidate size");
    if (linear.size() != k) throw ArgumentError("linear term does not match candidate size");
    if (!z.allFinite() || !omega.allFinite() || !linear.allFinite()) {
        throw ArgumentError("projection input contains non-finite entries");
    }

    OmegaProjection out;
    Eigen::MatrixXd m = 0.5 * (omega + omega.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig < kMinEigenvalue) {
        m.diagonal().array() += kMinEigenvalue - min_eig;
        out.report.regularized = true;
    }
    const Eigen::VectorXd c = linear;

    Eigen::VectorXd w = project_simplex_box(z, lower, upper);
    const std::size_t cap =
        options.active_set_iterations > 0 ? options.active_set_iterations : 50 * static_cast<std::size_t>(k);
    const auto outcome = active_set(w, z, m, c, lower, upper, cap);
    out.report.iterations = outcome.iterations;
    snap_to_bounds(w, lower, upper);

    auto kkt = kkt_residual(w, m * (w - z) - c, lower, upper);
    if (!outcome.converged || kkt.residual > options.tol * kkt.scale) {
        out.report.fallback_used = true;
        out.report.iterations += projected_gradient(w, z, m, c, lower, upper, options.tol);
        kkt = kkt_residual(w, m * (w - z) - c, lower, upper);
        if (kkt.residual > options.tol * kkt.scale) {
            std::ostringstream os;
            os << "covariance-metric projection did not converge (KKT residual " << kkt.residual << ")";
            throw ConvergenceError(os.str(), std::vector<double>(w.begin(), w.end()), kkt.residual);
        }
    }
    const Eigen::VectorXd d = w - z;
    out.report.objective_value = std::max(0.0, 0.5 * d.dot(m * d));
    out.report.kkt_residual = kkt.residual;
    out.weights = std::move(w);
    return out;
}

OmegaProjection project_omega(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::MatrixXd>& omega,
                              double lower, double upper, const QpOptions& options) {
    return project_omega(z, omega, lower, upper, Eigen::VectorXd::Zero(z.size()), options);
}

bool FeasibilityReport::has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; });
}

FeasibilityReport is_feasible(const Portfolio& p, const ConstraintSet& c, std::size_t n) {
    FeasibilityReport report;
    const auto fail = [&report](ViolationKind kind, std::string detail) {
        report.feasible = false;
        report.violations.push_back({kind, std::move(detail)});
    };
    if (static_cast<std::size_t>(p.weights.size()) != p.active.size()) {
        fail(ViolationKind::Shape, "weight count differs from active index count");
        return report;
    }
    for (std::size_t j = 0; j < p.active.size(); ++j) {
        if (p.active[j] >= n) fail(ViolationKind::IndexRange, "index " + std::to_string(p.active[j]) + " >= " + std::to_string(n));
        if (j > 0 && p.active[j] <= p.active[j - 1]) fail(ViolationKind::Ordering, "indices not sorted and distinct");
    }
    if (p.active.size() > c.k) {
        fail(ViolationKind::Cardinality,
             std::to_string(p.active.size()) + " active assets exceed k=" + std::to_string(c.k));
    }
    const double total = p.weights.sum();
    if (std::abs(total - 1.0) > 1e-8) {
        std::ostringstream os;
        os << "weights sum to " << total;
        fail(ViolationKind::Budget, os.str());
    }
    for (std::size_t j = 0; j < p.active.size(); ++j) {
        const double wj = p.weights(static_cast<Eigen::Index>(j));
        if (wj < c.lower - 1e-10) {
            std::ostringstream os;
            os << "asset " << p.active[j] << " weight " << wj << " below " << c.lower;
            fail(ViolationKind::LowerBound, os.str());
        }
        if (wj > c.upper + 1e-10) {
            std::ostringstream os;
            os << "asset " << p.active[j] << " weight " << wj << " above " << c.upper;
            fail(ViolationKind::UpperBound, os.str());
        }
    }
    return report;
}

std::string to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::Shape: return "shape";
        case ViolationKind::IndexRange: return "index-range";
        case ViolationKind::Ordering: return "ordering";
        case ViolationKind::Cardinality: return "cardinality";
        case ViolationKind::Budget: return "budget";
        case ViolationKind::LowerBound: return "lower-bound";
        case ViolationKind::UpperBound: return "upper-bound";
    }
    return "unknown";
}

}  // namespace casp
