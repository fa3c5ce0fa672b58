#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "casp/market_data.hpp"
#include "casp/projection.hpp"

namespace casp {

enum class SelectionKind { Abs, VolNorm, MinVar, Sharpe, ReturnBoosted };

/// Stage-1 scoring rule. lambda is read by ReturnBoosted only, risk_free by
/// Sharpe only.
struct SelectionRule {
    SelectionKind kind = SelectionKind::VolNorm;
    double lambda = 0.0;
    double risk_free = 0.045;
};

enum class ProjectionKind { Euclidean, OmegaMetric, ReturnRegularized };

/// Stage-2 projection. gamma is the weight of the -gamma * mu_tilde' w term
/// and is read by ReturnRegularized only.
struct ProjectionRule {
    ProjectionKind kind = ProjectionKind::OmegaMetric;
    double gamma = 0.0;
};

enum class MethodName { Euclidean, VolNormEuc, MinVarEuc, SharpeEuc, CaspBasic, CaspRetSel, RaCasp };

struct RepairMethod {
    MethodName name = MethodName::CaspBasic;
    SelectionRule selection;
    ProjectionRule projection;
};

/// Tunables shared by the presets that use them.
struct MethodParams {
    double lambda = 1.2;
    double gamma = 0.35;
    double risk_free = 0.045;
};

RepairMethod make_method(MethodName name, const MethodParams& params = {});

/// `euclidean`, `volnorm-euc`, `minvar-euc`, `sharpe-euc`, `casp-basic`,
/// `casp-retsel`, `ra-casp`.
std::string_view method_id(MethodName name);
MethodName parse_method(std::string_view id);
const std::array<MethodName, 7>& all_methods();

/// Min-max normalization of mu onto [0, 1]; all 0.5 when mu is constant.
Eigen::VectorXd normalized_returns(const Eigen::VectorXd& mu);

Eigen::VectorXd selection_scores(const Eigen::Ref<const Eigen::VectorXd>& z, const MarketModel& model,
                                 const SelectionRule& rule);

/// Indices of the k largest scores, ties to the lower index, sorted ascending.
/// NaN scores rank below everything else.
std::vector<std::size_t> select_top_k(const Eigen::Ref<const Eigen::VectorXd>& scores, std::size_t k);

struct RepairResult {
    Portfolio portfolio;
    QpReport report;
    bool degenerate_scores = false;  ///< every score was zero; the k lowest indices were taken
};

RepairResult repair(const Eigen::Ref<const Eigen::VectorXd>& z, const MarketModel& model,
                    const ConstraintSet& constraints, const RepairMethod& method);

struct BatchItem {
    std::optional<RepairResult> result;
    std::string error;

    bool ok() const { return result.has_value(); }
};

/// Elementwise repair. Output order matches input order and does not depend
/// on the thread count. Errors are captured per element.
std::vector<BatchItem> repair_batch(const std::vector<Eigen::VectorXd>& candidates, const MarketModel& model,
                                    const ConstraintSet& constraints, const RepairMethod& method,
                                    std::size_t threads = 1);

}  // namespace casp
