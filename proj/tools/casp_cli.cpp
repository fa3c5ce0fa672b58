#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "casp/config.hpp"
#include "casp/error.hpp"
#include "casp/experiments.hpp"
#include "casp/report.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

std::string utc_now(const char* format) {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, format, &tm);
    return buf;
}

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string out_dir = "results";
    std::string format = "both";
    std::string manifest_path;
    std::string stamp;
    bool quiet = false;
    bool tune = false;
    std::string prices;
    std::string esg;
    std::string export_prices;
};

casp::ExperimentConfig build_config(const Options& opt) {
    casp::ExperimentConfig config = opt.config_path.empty() ? casp::ExperimentConfig{} : casp::load_config(opt.config_path);
    if (!opt.prices.empty()) config.data_source = fs::absolute(opt.prices).lexically_normal().string();
    if (!opt.esg.empty()) config.esg_source = fs::absolute(opt.esg).lexically_normal().string();
    if (!config.is_synthetic()) config.data_source = fs::absolute(config.data_source).lexically_normal().string();
    if (!config.esg_source.empty()) config.esg_source = fs::absolute(config.esg_source).lexically_normal().string();
    if (opt.seed) config.seed = *opt.seed;
    if (opt.threads) config.threads = *opt.threads;
    config.validate();
    return config;
}

int run_study(const std::string& experiment, const Options& opt) {
    casp::RunManifest manifest;
    if (!opt.manifest_path.empty()) {
        if (!opt.config_path.empty() || opt.seed || !opt.prices.empty() || !opt.esg.empty()) {
            throw casp::ConfigError("--manifest cannot be combined with --config, --seed, --prices or --esg");
        }
        const auto doc = nlohmann::ordered_json::parse(casp::read_text_file(opt.manifest_path), nullptr, false);
        if (doc.is_discarded()) throw casp::ConfigError("manifest is not valid JSON: " + opt.manifest_path);
        const auto recorded = casp::manifest_from_json(doc);
        if (recorded.experiment != experiment) {
            throw casp::ConfigError("manifest records a '" + recorded.experiment + "' run, not '" + experiment + "'");
        }
        manifest.config = recorded.config;
        if (opt.threads) manifest.config.threads = *opt.threads;
        manifest.tune = recorded.tune;
        manifest.data_fingerprint = recorded.data_fingerprint;
    } else {
        manifest.config = build_config(opt);
        manifest.tune = opt.tune;
    }
    manifest.experiment = experiment;
    manifest.format = casp::parse_report_format(opt.format);
    manifest.stamp = opt.stamp.empty() ? utc_now("%Y%m%dT%H%M%SZ") : opt.stamp;
    manifest.started_at = utc_now("%Y-%m-%dT%H:%M:%SZ");

    const auto data = casp::load_market_data(manifest.config);
    if (!manifest.data_fingerprint.empty() && manifest.data_fingerprint != data.fingerprint) {
        throw casp::FormatError("input data fingerprint " + data.fingerprint + " does not match the manifest (" +
                                manifest.data_fingerprint + ")");
    }
    manifest.data_fingerprint = data.fingerprint;

    std::ostream* progress = opt.quiet ? nullptr : &std::cerr;
    const auto report = casp::run_experiment(experiment, manifest.config, data, manifest.tune, progress);
    const auto written = casp::emit_report(report, manifest.format, opt.out_dir, manifest.stamp);

    manifest.finished_at = utc_now("%Y-%m-%dT%H:%M:%SZ");
    for (const auto& p : written) manifest.outputs.push_back(p.filename().string());
    const auto manifest_file = fs::path(opt.out_dir) / "manifest.json";
    casp::write_text_file(manifest_file, casp::to_json(manifest).dump(2) + "\n");

    for (const auto& p : written) std::cout << p.string() << '\n';
    std::cout << manifest_file.string() << '\n';
    return kOk;
}

int run_ingest(const Options& opt) {
    const auto config = build_config(opt);
    const auto data = casp::load_market_data(config);
    const auto model = casp::estimate_model(casp::compute_returns(data.prices), config.estimation(), data.esg);

    std::cout << "assets: " << data.prices.num_assets() << '\n'
              << "dates: " << data.prices.num_dates() << " (" << data.prices.dates.front().to_string() << " to "
              << data.prices.dates.back().to_string() << ")\n"
              << "dropped rows: " << data.dropped_rows << '\n'
              << "fingerprint: " << data.fingerprint << '\n'
              << "condition number: " << model.meta.condition_number << '\n';
    for (const auto& w : model.meta.warnings) std::cout << "warning: " << w << '\n';

    const std::string stamp = opt.stamp.empty() ? utc_now("%Y%m%dT%H%M%SZ") : opt.stamp;
    const auto model_file = fs::path(opt.out_dir) / ("model-" + stamp + ".json");
    casp::write_text_file(model_file, casp::to_json(model).dump(2) + "\n");
    std::cout << model_file.string() << '\n';

    if (!opt.export_prices.empty()) {
        std::ostringstream csv;
        casp::write_prices(csv, data.prices);
        casp::write_text_file(opt.export_prices, csv.str());
        std::cout << opt.export_prices << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Covariance-aware repair operators for cardinality-constrained portfolios"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("--config", opt.config_path, "Experiment config file (key = value)")->check(CLI::ExistingFile);
    app.add_option("--seed", opt.seed, "Master seed, overrides the config");
    app.add_option("--threads", opt.threads, "Worker threads, overrides the config");
    app.add_option("--out-dir", opt.out_dir, "Directory for reports and manifest.json")->capture_default_str();
    app.add_option("--format", opt.format, "Report format")
        ->check(CLI::IsMember({"json", "csv", "both"}))
        ->capture_default_str();
    app.add_option("--manifest", opt.manifest_path, "Re-run from a manifest.json")->check(CLI::ExistingFile);
    app.add_option("--timestamp", opt.stamp, "Stamp used in report file names (default: UTC now)");
    app.add_option("--prices", opt.prices, "Prices CSV, overrides data_source")->check(CLI::ExistingFile);
    app.add_option("--esg", opt.esg, "ESG CSV, overrides esg_source")->check(CLI::ExistingFile);
    app.add_flag("--quiet", opt.quiet, "No progress output");

    app.add_subcommand("ablation", "Repair random candidates with every method and compare variance");
    app.add_subcommand("oos", "Walk-forward in-sample vs realized Sharpe over split_boundaries");
    app.add_subcommand("turnover", "Simulated rebalancing turnover, cost and net Sharpe proxy");
    auto* optimize = app.add_subcommand("optimize", "Repeated MOGWO runs per method");
    optimize->add_flag("--tune", opt.tune, "Grid-search RA-CASP (lambda, gamma) first");
    auto* ingest = app.add_subcommand("ingest", "Load data, fit the market model and write it as JSON");
    ingest->add_option("--export-prices", opt.export_prices, "Also write the price history as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        const auto* sub = app.get_subcommands().front();
        if (sub->get_name() == "ingest") return run_ingest(opt);
        return run_study(sub->get_name(), opt);
    } catch (const casp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const casp::ArgumentError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const casp::InfeasibleConstraintsError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const casp::FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const casp::InsufficientDataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const casp::IoError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const casp::ConvergenceError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const casp::UndefinedMetricError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const casp::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
}
