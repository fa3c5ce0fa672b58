#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "casp/market_data.hpp"
#include "casp/objectives.hpp"
#include "casp/projection.hpp"

namespace casp {

/// (mu'w - r_f) / sqrt(w'Omega w). Throws UndefinedMetricError at zero variance.
double sharpe_insample(const Portfolio& p, const MarketModel& model, double risk_free);

/// Annualized mean of the daily portfolio log returns w'r_t, minus r_f, over
/// the annualized standard deviation of the same series (T-1 denominator).
double sharpe_realized(const Portfolio& p, const ReturnPanel& panel, double risk_free, double annualization);

/// (w1 - w2)' Omega (w1 - w2): the variance of the return difference of the
/// two portfolios.
double tracking_error_sq(const Eigen::Ref<const Eigen::VectorXd>& w1, const Eigen::Ref<const Eigen::VectorXd>& w2,
                         const Eigen::Ref<const Eigen::MatrixXd>& omega);

struct TurnoverCost {
    double turnover = 0.0;  ///< one-way: sum |w_new - w_old| / 2
    double cost_bps = 0.0;  ///< turnover * cost rate
};

TurnoverCost turnover_cost(const Eigen::Ref<const Eigen::VectorXd>& w_old, const Eigen::Ref<const Eigen::VectorXd>& w_new,
                           double cost_rate_bps);
TurnoverCost turnover_cost(const Portfolio& w_old, const Portfolio& w_new, double cost_rate_bps);

/// Gross Sharpe minus an annualized cost drag:
///   gross - (cost_bps / 1e4) * rebalances_per_year / sigma_annual.
/// This is a proxy, not a cost-aware backtest.
double net_sharpe_proxy(double gross_sharpe, double cost_bps, double sigma_annual, double rebalances_per_year);

struct HypervolumeResult {
    double value = 0.0;
    std::size_t excluded = 0;  ///< points that do not strictly dominate the reference
};

/// Exact hypervolume of a tri-objective front by dimension sweep. Objectives
/// are oriented as (variance, -return, -esg) for minimization; points that
/// do not strictly dominate the reference are skipped and counted.
HypervolumeResult hypervolume(const std::vector<Objectives>& front, const Objectives& reference);

/// Nadir of the union of fronts pushed out by `offset` times each
/// objective's range. A zero range falls back to offset * max(|nadir|, 1e-6).
Objectives hypervolume_reference(const std::vector<std::vector<Objectives>>& fronts, double offset = 0.05);

struct TestResult {
    double statistic = 0.0;  ///< signed-rank sum W+ - W-
    double p_value = 1.0;    ///< two-sided
    std::size_t n_effective = 0;
    bool exact = false;
};

enum class WilcoxonMode { Auto, Exact, Normal };

/// Two-sided Wilcoxon signed-rank test of paired samples. Zero differences
/// are dropped and tied magnitudes get mid-ranks. Auto uses the exact null
/// distribution up to 25 effective pairs and the normal approximation with
/// continuity and tie corrections above that. Needs 5 nonzero differences.
TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                WilcoxonMode mode = WilcoxonMode::Auto);

/// 1-based ranks, ties replaced by their average rank.
std::vector<double> mid_ranks(std::span<const double> values);

/// Pearson correlation of the mid-ranks.
double spearman_rho(std::span<const double> a, std::span<const double> b);

}  // namespace casp
