#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "casp/config.hpp"
#include "casp/market_data.hpp"
#include "casp/report.hpp"
#include "casp/rng.hpp"

namespace casp {

/// Prices and ESG inputs an experiment runs on, with a content hash of the
/// input bytes.
struct MarketData {
    PriceHistory prices;
    EsgInputs esg;
    std::size_t dropped_rows = 0;
    std::string fingerprint;  ///< `fnv1a64:<16 hex digits>`
};

/// Loads the CSV named by data_source (plus esg_source if set) or generates
/// the synthetic market. For synthetic data the fingerprint hashes the
/// generated prices in CSV form.
MarketData load_market_data(const ExperimentConfig& config);

/// The configured methods with `euclidean` prepended when missing and
/// duplicates removed.
std::vector<MethodName> comparison_methods(const ExperimentConfig& config);

/// n candidates uniform in [0, 1]^dim, scaled per `scaling`.
std::vector<Eigen::VectorXd> draw_candidates(Rng& rng, std::size_t n, std::size_t dim, CandidateScaling scaling);

/// Optional line-atomic progress sink; pass nullptr for silence.
using Progress = std::ostream*;

Report run_ablation(const ExperimentConfig& config, const MarketData& data, Progress progress = nullptr);
Report run_oos(const ExperimentConfig& config, const MarketData& data, Progress progress = nullptr);
Report run_turnover(const ExperimentConfig& config, const MarketData& data, Progress progress = nullptr);

/// MOGWO runs. With `tune`, RA-CASP's (lambda, gamma) are first chosen from
/// the tuning grids by mean in-sample Sharpe on the segment before the first
/// split boundary (the whole panel when there is none).
Report run_optimize(const ExperimentConfig& config, const MarketData& data, bool tune = false,
                    Progress progress = nullptr);

/// Everything needed to re-run an experiment.
struct RunManifest {
    std::string experiment;
    ExperimentConfig config;
    bool tune = false;
    ReportFormat format = ReportFormat::Both;
    std::string data_fingerprint;
    std::string stamp;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> outputs;
};

nlohmann::ordered_json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::ordered_json& doc);

/// Dispatches on the experiment name: ablation, oos, turnover or optimize.
Report run_experiment(const std::string& experiment, const ExperimentConfig& config, const MarketData& data,
                      bool tune = false, Progress progress = nullptr);

}  // namespace casp
