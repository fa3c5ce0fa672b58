#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace casp {

/// Cardinality limit k and per-asset weight bounds [lower, upper] that apply
/// to every held asset.
struct ConstraintSet {
    std::size_t k = 15;
    double lower = 0.02;
    double upper = 0.15;

    /// Throws InfeasibleConstraintsError unless 0 <= lower <= upper <= 1,
    /// k >= 1 and k*lower <= 1 <= k*upper.
    void validate() const;
};

/// Feasible solution: sorted distinct asset indices and their weights.
struct Portfolio {
    std::vector<std::size_t> active;
    Eigen::VectorXd weights;

    /// Length-n vector with zeros outside the active set.
    Eigen::VectorXd dense(std::size_t n) const;
};

struct QpReport {
    double objective_value = 0.0;  ///< 0.5 (w - z)' M (w - z) in the projection metric M
    std::size_t iterations = 0;
    bool regularized = false;  ///< a ridge was added to lift the smallest eigenvalue to 1e-8
    bool fallback_used = false;  ///< active-set stalled and projected gradient finished the job
    double kkt_residual = 0.0;
};

/// Euclidean projection onto {w : sum w = 1, lower <= w_i <= upper} by
/// bisection on the threshold tau in w_i = clip(z_i - tau, lower, upper).
/// The result satisfies |sum w - 1| <= tol.
Eigen::VectorXd project_simplex_box(const Eigen::Ref<const Eigen::VectorXd>& z, double lower, double upper,
                                    double tol = 1e-10);

struct OmegaProjection {
    Eigen::VectorXd weights;
    QpReport report;
};

struct QpOptions {
    double tol = 1e-9;  ///< KKT residual target, relative to max(1, gradient scale)
    std::size_t active_set_iterations = 0;  ///< 0 means 50 * k
};

/// Minimizes 0.5 (w - z)' Omega (w - z) - linear' w over the box-constrained
/// simplex with a primal active-set method. Omega is symmetrized first and,
/// if its smallest eigenvalue is below 1e-8, shifted by a ridge so that it is
/// not. Falls back to projected gradient after 50*k active-set iterations;
/// throws ConvergenceError if that fails too.
OmegaProjection project_omega(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::MatrixXd>& omega,
                              double lower, double upper, const Eigen::Ref<const Eigen::VectorXd>& linear,
                              const QpOptions& options = {});

OmegaProjection project_omega(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::Ref<const Eigen::MatrixXd>& omega,
                              double lower, double upper, const QpOptions& options = {});

enum class ViolationKind { Shape, IndexRange, Ordering, Cardinality, Budget, LowerBound, UpperBound };

struct Violation {
    ViolationKind kind;
    std::string detail;
};

struct FeasibilityReport {
    bool feasible = true;
    std::vector<Violation> violations;

    explicit operator bool() const { return feasible; }
    bool has(ViolationKind kind) const;
};

/// Budget within 1e-8, active weights inside [lower, upper] within 1e-10,
/// at most k active assets, indices sorted, distinct and below n.
FeasibilityReport is_feasible(const Portfolio& p, const ConstraintSet& c, std::size_t n);

std::string to_string(ViolationKind kind);

}  // namespace casp
