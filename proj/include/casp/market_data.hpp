#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace casp {

/// Calendar date, ISO-8601 (YYYY-MM-DD) on the wire.
struct Date {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;

    static Date parse(std::string_view iso);
    std::string to_string() const;

    auto operator<=>(const Date&) const = default;
};

/// Daily adjusted closes, T dates by N assets. Dates strictly increasing,
/// every price strictly positive.
struct PriceHistory {
    std::vector<std::string> asset_ids;
    std::vector<Date> dates;
    Eigen::MatrixXd prices;

    std::size_t num_dates() const { return dates.size(); }
    std::size_t num_assets() const { return asset_ids.size(); }

    /// Throws FormatError if any invariant is broken.
    void validate() const;
};

struct LoadedPrices {
    PriceHistory history;
    std::size_t dropped_rows = 0;
};

/// Daily log returns; row t is ln(p[t+1] / p[t]) and carries the later date.
struct ReturnPanel {
    std::vector<std::string> asset_ids;
    std::vector<Date> dates;
    Eigen::MatrixXd returns;

    std::size_t num_observations() const { return static_cast<std::size_t>(returns.rows()); }
    std::size_t num_assets() const { return asset_ids.size(); }
};

/// Raw inputs for the ESG composite. overall_risk is a governance risk score
/// in [0, 10]; sector_proxy an environmental/social proxy in [0, 100].
struct EsgInputs {
    std::vector<int> overall_risk;
    std::vector<double> sector_proxy;

    std::size_t size() const { return overall_risk.size(); }
};

struct EstimationParams {
    double shrinkage = 0.10;
    double annualization = 252.0;
};

struct ModelMeta {
    double shrinkage = 0.0;
    double annualization = 252.0;
    double condition_number = 0.0;
    std::vector<std::string> warnings;
};

/// Annualized expected returns, shrunk annualized covariance and ESG scores
/// for one asset universe.
struct MarketModel {
    std::vector<std::string> asset_ids;
    Eigen::VectorXd mu;
    Eigen::MatrixXd omega;
    Eigen::VectorXd esg;
    ModelMeta meta;

    std::size_t size() const { return static_cast<std::size_t>(mu.size()); }
};

struct TemporalSplit {
    ReturnPanel train;
    ReturnPanel test;
    Date boundary;
};

/// Parameters of the synthetic factor-model market.
///
/// Daily log returns are r_t = alpha + B f_t + eps_t. Factor 0 is a market
/// factor every asset loads on positively; factors 1.. act as sectors, each
/// asset loading mainly on one of them. Idiosyncratic volatilities are drawn
/// per asset and multiplied by idio_scale.
struct SynthSpec {
    std::size_t n_assets = 30;
    std::size_t n_factors = 5;
    std::uint64_t seed = 1;
    std::size_t horizon = 1000;  ///< number of price rows
    double idio_scale = 1.0;
    /// From this price row on, factor drifts shift by regime_shift_drift
    /// (market factor +, sector factors alternating sign). 0 disables.
    std::size_t regime_shift_row = 0;
    double regime_shift_drift = 0.0;
    Date start{2020, 1, 2};
};

/// Parses the wide CSV layout: header `date,<ticker>,...`, one row per date.
/// Rows with an empty, non-numeric or non-positive cell are dropped; rows are
/// sorted by date.
LoadedPrices parse_prices(std::istream& in);
LoadedPrices load_prices(const std::filesystem::path& path);

void write_prices(std::ostream& out, const PriceHistory& prices);

/// Reads `ticker,overall_risk,sector_proxy` rows and orders them to match
/// asset_ids. Every asset must be present.
EsgInputs parse_esg(std::istream& in, const std::vector<std::string>& asset_ids);
EsgInputs load_esg(const std::filesystem::path& path, const std::vector<std::string>& asset_ids);

/// overall_risk = 5 and sector_proxy = 50 for every asset (composite 50).
EsgInputs neutral_esg(std::size_t n);
EsgInputs synth_esg(std::size_t n, std::uint64_t seed);

/// 0.4 * G + 0.6 * ES with G = (10 - overall_risk) * 10.
Eigen::VectorXd esg_composite(const EsgInputs& inputs);

ReturnPanel compute_returns(const PriceHistory& prices);

/// Unbiased (T-1 denominator) covariance of the daily returns, unscaled.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& returns);

/// mu = annualization * mean daily log return. omega is the annualized sample
/// covariance shrunk toward trace(S)/N * I. Zero-variance assets get a 1e-10
/// variance floor and a warning in meta.
MarketModel estimate_model(const ReturnPanel& returns, const EstimationParams& params, const EsgInputs& esg);

/// Ratio of extreme eigenvalues of a symmetric matrix; +inf when singular.
double condition_number(const Eigen::MatrixXd& symmetric);

/// Price rows strictly before the boundary, and rows on or after it.
std::pair<PriceHistory, PriceHistory> split_prices(const PriceHistory& prices, const Date& boundary);

/// Return panels computed independently on each side of the boundary; no
/// return spans it. Each side needs at least two price rows.
TemporalSplit split_temporal(const PriceHistory& prices, const Date& boundary);

PriceHistory synth_market(const SynthSpec& spec);

nlohmann::ordered_json to_json(const MarketModel& model);
MarketModel model_from_json(const nlohmann::json& doc);

}  // namespace casp
