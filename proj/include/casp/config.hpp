#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "casp/market_data.hpp"
#include "casp/mogwo.hpp"
#include "casp/projection.hpp"
#include "casp/repair.hpp"

namespace casp {

/// How random candidates are scaled before repair. UnitSum divides each
/// uniform draw by its sum so candidates live on the budget hyperplane;
/// None repairs the raw draw.
enum class CandidateScaling { UnitSum, None };

std::string_view to_string(CandidateScaling scaling);

/// Everything an experiment run depends on. Serialized as a flat
/// `key = value` text file whose keys mirror these field names, with nested
/// fields written as `constraints.k`, `mogwo.population` and so on.
struct ExperimentConfig {
    /// `synthetic`, or the path of a wide prices CSV.
    std::string data_source = "synthetic";
    /// Optional ESG CSV for a file data source. Empty means neutral scores.
    std::string esg_source;
    SynthSpec synthetic;

    ConstraintSet constraints;
    std::vector<MethodName> methods{all_methods().begin(), all_methods().end()};
    std::size_t n_candidates = 500;
    std::uint64_t seed = 1;
    std::vector<Date> split_boundaries;
    CandidateScaling candidate_scaling = CandidateScaling::UnitSum;

    double r_f = 0.045;
    double cost_rate_bps = 10.0;
    double shrinkage = 0.10;
    double annualization = 252.0;

    std::size_t turnover_events = 50;
    double turnover_perturbation_sd = 0.15;
    double turnover_rebalances_per_year = 12.0;

    MogwoConfig mogwo;
    std::size_t repeats = 15;

    double ra_lambda = 1.2;
    double ra_gamma = 0.35;
    std::vector<double> tune_lambdas{0.4, 0.6, 0.8, 1.0, 1.2};
    std::vector<double> tune_gammas{0.15, 0.20, 0.25, 0.30, 0.35};

    std::size_t threads = 1;

    bool is_synthetic() const { return data_source == "synthetic"; }
    MethodParams method_params() const { return {ra_lambda, ra_gamma, r_f}; }
    EstimationParams estimation() const { return {shrinkage, annualization}; }

    /// Throws ConfigError on an invalid combination.
    void validate() const;
};

/// Parses the key-value text. Blank lines and `#` comments are ignored;
/// unknown or repeated keys are errors. Relative file paths are resolved
/// against `base_dir`.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form: every key, fixed order, round-trip precision.
std::string to_config_text(const ExperimentConfig& config);

nlohmann::ordered_json to_json(const ExperimentConfig& config);

}  // namespace casp
