#include "casp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <syncstream>
#include <thread>

#include "casp/error.hpp"
#include "casp/evaluation.hpp"
#include "casp/mogwo.hpp"
#include "casp/repair.hpp"

namespace casp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void say(Progress progress, const std::string& line) {
    if (progress) std::osyncstream(*progress) << line << '\n';
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

std::string method_label(MethodName m) { return std::string(method_id(m)); }

Cell number(double x) { return std::isfinite(x) ? Cell{x} : Cell{}; }
Cell count(std::size_t n) { return static_cast<std::int64_t>(n); }

double mean_of(const std::vector<double>& xs) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : xs) {
        if (std::isfinite(x)) {
            sum += x;
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : kNaN;
}

double sd_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double ss = 0.0;
    std::size_t n = 0;
    for (double x : xs) {
        if (std::isfinite(x)) {
            ss += (x - m) * (x - m);
            ++n;
        }
    }
    return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : kNaN;
}

double max_of(const std::vector<double>& xs) {
    double best = kNaN;
    for (double x : xs) {
        if (std::isfinite(x) && !(x <= best)) best = x;
    }
    return best;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written by index so the outcome does not depend on scheduling. The first
/// exception (lowest index) is rethrown after every worker has finished.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(n, 1));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<RepairResult> repair_all(const std::vector<Eigen::VectorXd>& candidates, const MarketModel& model,
                                     const ConstraintSet& constraints, const RepairMethod& method,
                                     std::size_t threads) {
    std::vector<std::optional<RepairResult>> slots(candidates.size());
    parallel_for(candidates.size(), threads,
                 [&](std::size_t i) { slots[i] = repair(candidates[i], model, constraints, method); });
    std::vector<RepairResult> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

double safe_sharpe(const Portfolio& p, const MarketModel& model, double r_f) {
    try {
        return sharpe_insample(p, model, r_f);
    } catch (const UndefinedMetricError&) {
        return kNaN;
    }
}

double safe_realized(const Portfolio& p, const ReturnPanel& panel, double r_f, double annualization) {
    try {
        return sharpe_realized(p, panel, r_f, annualization);
    } catch (const UndefinedMetricError&) {
        return kNaN;
    }
}

struct Paired {
    Cell statistic;
    Cell p_value;
    Cell n_effective;
    Cell exact;
};

/// Wilcoxon on the finite pairs; missing cells when it is undefined.
Paired paired_test(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isfinite(a[i]) && std::isfinite(b[i])) {
            x.push_back(a[i]);
            y.push_back(b[i]);
        }
    }
    try {
        const auto r = wilcoxon_signed_rank(x, y);
        return {r.statistic, r.p_value, count(r.n_effective), r.exact};
    } catch (const InsufficientDataError&) {
        return {};
    }
}

Cell safe_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isfinite(a[i]) && std::isfinite(b[i])) {
            x.push_back(a[i]);
            y.push_back(b[i]);
        }
    }
    try {
        return spearman_rho(x, y);
    } catch (const UndefinedMetricError&) {
        return {};
    } catch (const InsufficientDataError&) {
        return {};
    }
}

MarketModel fit(const ExperimentConfig& config, const PriceHistory& prices, const EsgInputs& esg) {
    return estimate_model(compute_returns(prices), config.estimation(), esg);
}

nlohmann::ordered_json base_parameters(const ExperimentConfig& config, const MarketData& data,
                                       const MarketModel& model) {
    nlohmann::ordered_json p;
    p["data_source"] = config.is_synthetic() ? "synthetic" : "csv";
    p["data_fingerprint"] = data.fingerprint;
    p["n_assets"] = model.size();
    p["n_dates"] = data.prices.num_dates();
    p["dropped_rows"] = data.dropped_rows;
    p["k"] = config.constraints.k;
    p["lower"] = config.constraints.lower;
    p["upper"] = config.constraints.upper;
    p["seed"] = config.seed;
    p["r_f"] = config.r_f;
    p["shrinkage"] = config.shrinkage;
    p["annualization"] = config.annualization;
    p["ra_lambda"] = config.ra_lambda;
    p["ra_gamma"] = config.ra_gamma;
    p["condition_number"] = std::isfinite(model.meta.condition_number) ? nlohmann::ordered_json(model.meta.condition_number)
                                                                        : nlohmann::ordered_json(nullptr);
    return p;
}

void add_model_warnings(Report& report, const MarketModel& model) {
    for (const auto& w : model.meta.warnings) report.notes.push_back("model: " + w);
}

std::vector<std::string> method_ids(const std::vector<MethodName>& methods) {
    std::vector<std::string> out;
    for (auto m : methods) out.push_back(method_label(m));
    return out;
}

}  // namespace

MarketData load_market_data(const ExperimentConfig& config) {
    MarketData data;
    if (config.is_synthetic()) {
        data.prices = synth_market(config.synthetic);
        data.esg = synth_esg(config.synthetic.n_assets, config.synthetic.seed);
        std::ostringstream csv;
        write_prices(csv, data.prices);
        data.fingerprint = "fnv1a64:" + hex64(fnv1a64(csv.str()));
        return data;
    }
    const std::string bytes = read_text_file(config.data_source);
    std::istringstream in(bytes);
    auto loaded = parse_prices(in);
    data.prices = std::move(loaded.history);
    data.dropped_rows = loaded.dropped_rows;
    std::uint64_t hash = fnv1a64(bytes);
    if (config.esg_source.empty()) {
        data.esg = neutral_esg(data.prices.num_assets());
    } else {
        const std::string esg_bytes = read_text_file(config.esg_source);
        std::istringstream esg_in(esg_bytes);
        data.esg = parse_esg(esg_in, data.prices.asset_ids);
        hash = fnv1a64(esg_bytes, hash);
    }
    data.fingerprint = "fnv1a64:" + hex64(hash);
    return data;
}

std::vector<MethodName> comparison_methods(const ExperimentConfig& config) {
    std::vector<MethodName> out{MethodName::Euclidean};
    for (auto m : config.methods) {
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    return out;
}

std::vector<Eigen::VectorXd> draw_candidates(Rng& rng, std::size_t n, std::size_t dim, CandidateScaling scaling) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(n);
    for (std::size_t c = 0; c < n; ++c) {
        Eigen::VectorXd z(static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform();
        if (scaling == CandidateScaling::UnitSum && z.sum() > 0.0) z /= z.sum();
        out.push_back(std::move(z));
    }
    return out;
}

Report run_ablation(const ExperimentConfig& config, const MarketData& data, Progress progress) {
    config.validate();
    const auto model = fit(config, data.prices, data.esg);
    const auto methods = comparison_methods(config);
    Rng rng(derive_seed(config.seed, "ablation", "candidates", 0));
    const auto candidates = draw_candidates(rng, config.n_candidates, model.size(), config.candidate_scaling);

    const std::size_t m_count = methods.size();
    std::vector<std::vector<double>> variance(m_count), sharpe(m_count), ret(m_count), esg(m_count);
    std::vector<std::size_t> fallbacks(m_count), regularized(m_count), degenerate(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        const auto results =
            repair_all(candidates, model, config.constraints, make_method(methods[m], config.method_params()), config.threads);
        for (const auto& r : results) {
            const auto obj = evaluate(r.portfolio, model);
            variance[m].push_back(obj.variance);
            ret[m].push_back(obj.ret);
            esg[m].push_back(obj.esg);
            sharpe[m].push_back(safe_sharpe(r.portfolio, model, config.r_f));
            fallbacks[m] += r.report.fallback_used;
            regularized[m] += r.report.regularized;
            degenerate[m] += r.degenerate_scores;
        }
        say(progress, "[ablation] " + method_label(methods[m]) + " done (" + std::to_string(m + 1) + "/" +
                          std::to_string(m_count) + ")");
    }

    Report report;
    report.experiment = "ablation";
    report.parameters = base_parameters(config, data, model);
    report.parameters["n_candidates"] = config.n_candidates;
    report.parameters["candidate_scaling"] = to_string(config.candidate_scaling);
    report.parameters["methods"] = method_ids(methods);
    add_model_warnings(report, model);

    const double base_mean = mean_of(variance[0]);
    Table summary{"methods",
                  {"method", "mean_variance", "sd_variance", "mean_sharpe", "mean_return", "mean_esg",
                   "variance_reduction_pct", "wilcoxon_statistic", "p_value_vs_euclidean", "qp_fallbacks",
                   "regularized", "degenerate_scores"},
                  {}};
    for (std::size_t m = 0; m < m_count; ++m) {
        const double mv = mean_of(variance[m]);
        const auto test = m == 0 ? Paired{} : paired_test(variance[m], variance[0]);
        summary.add_row({method_label(methods[m]), number(mv), number(sd_of(variance[m])), number(mean_of(sharpe[m])),
                         number(mean_of(ret[m])), number(mean_of(esg[m])), number(100.0 * (1.0 - mv / base_mean)),
                         test.statistic, test.p_value, count(fallbacks[m]), count(regularized[m]),
                         count(degenerate[m])});
    }

    Table comparisons{"comparisons",
                      {"method", "baseline", "metric", "mean_difference", "wilcoxon_statistic", "p_value",
                       "n_effective", "exact"},
                      {}};
    auto compare = [&](std::size_t a, std::size_t b) {
        const auto test = paired_test(variance[a], variance[b]);
        comparisons.add_row({method_label(methods[a]), method_label(methods[b]), std::string("variance"),
                             number(mean_of(variance[a]) - mean_of(variance[b])), test.statistic, test.p_value,
                             test.n_effective, test.exact});
    };
    for (std::size_t m = 1; m < m_count; ++m) compare(m, 0);
    const auto casp = std::find(methods.begin(), methods.end(), MethodName::CaspBasic);
    const auto volnorm = std::find(methods.begin(), methods.end(), MethodName::VolNormEuc);
    if (casp != methods.end() && volnorm != methods.end()) {
        compare(static_cast<std::size_t>(casp - methods.begin()), static_cast<std::size_t>(volnorm - methods.begin()));
    }

    Table samples{"samples", {"candidate", "method", "variance", "sharpe", "return", "esg"}, {}};
    for (std::size_t m = 0; m < m_count; ++m) {
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            samples.add_row({count(c), method_label(methods[m]), number(variance[m][c]), number(sharpe[m][c]),
                             number(ret[m][c]), number(esg[m][c])});
        }
    }

    report.tables = {std::move(summary), std::move(comparisons), std::move(samples)};
    return report;
}

Report run_oos(const ExperimentConfig& config, const MarketData& data, Progress progress) {
    config.validate();
    if (config.split_boundaries.empty()) throw ConfigError("oos needs at least one entry in split_boundaries");
    const auto& dates = data.prices.dates;
    const auto methods = comparison_methods(config);

    Report report;
    report.experiment = "oos";
    Table summary{"splits",
                  {"boundary", "test_end", "method", "train_days", "test_days", "mean_insample_sharpe",
                   "mean_realized_sharpe", "spearman_rho", "realized_improvement_pct", "wilcoxon_statistic",
                   "p_value_vs_euclidean"},
                  {}};
    Table samples{"samples", {"boundary", "candidate", "method", "insample_sharpe", "realized_sharpe"}, {}};

    for (std::size_t s = 0; s < config.split_boundaries.size(); ++s) {
        const Date& boundary = config.split_boundaries[s];
        if (dates.empty() || !(dates.front() < boundary) || dates.back() < boundary) {
            throw ArgumentError("split boundary " + boundary.to_string() + " is outside the data range");
        }
        auto [before, after] = split_prices(data.prices, boundary);
        if (s + 1 < config.split_boundaries.size()) {
            after = split_prices(after, config.split_boundaries[s + 1]).first;
        }
        if (before.num_dates() < 2 || after.num_dates() < 2) {
            throw InsufficientDataError("split at " + boundary.to_string() + " leaves fewer than two price rows on a side");
        }
        const auto model = fit(config, before, data.esg);
        const auto test_panel = compute_returns(after);
        if (s == 0) {
            report.parameters = base_parameters(config, data, model);
            report.parameters["n_candidates"] = config.n_candidates;
            report.parameters["candidate_scaling"] = to_string(config.candidate_scaling);
            report.parameters["methods"] = method_ids(methods);
            auto bounds = nlohmann::ordered_json::array();
            for (const auto& b : config.split_boundaries) bounds.push_back(b.to_string());
            report.parameters["split_boundaries"] = bounds;
        }
        for (const auto& w : model.meta.warnings) report.notes.push_back("model (" + boundary.to_string() + "): " + w);

        Rng rng(derive_seed(config.seed, "oos", boundary.to_string(), 0));
        const auto candidates = draw_candidates(rng, config.n_candidates, model.size(), config.candidate_scaling);

        std::vector<std::vector<double>> insample(methods.size()), realized(methods.size());
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const auto results = repair_all(candidates, model, config.constraints,
                                            make_method(methods[m], config.method_params()), config.threads);
            for (const auto& r : results) {
                insample[m].push_back(safe_sharpe(r.portfolio, model, config.r_f));
                realized[m].push_back(safe_realized(r.portfolio, test_panel, config.r_f, config.annualization));
            }
        }
        const double base = mean_of(realized[0]);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const double mean_realized = mean_of(realized[m]);
            const auto test = m == 0 ? Paired{} : paired_test(realized[m], realized[0]);
            summary.add_row({boundary.to_string(), after.dates.back().to_string(), method_label(methods[m]),
                             count(before.num_dates()), count(after.num_dates()), number(mean_of(insample[m])),
                             number(mean_realized), safe_spearman(insample[m], realized[m]),
                             number(100.0 * (mean_realized - base) / std::abs(base)), test.statistic, test.p_value});
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                samples.add_row({boundary.to_string(), count(c), method_label(methods[m]), number(insample[m][c]),
                                 number(realized[m][c])});
            }
        }
        say(progress, "[oos] split " + boundary.to_string() + " done (" + std::to_string(s + 1) + "/" +
                          std::to_string(config.split_boundaries.size()) + ")");
    }
    report.tables = {std::move(summary), std::move(samples)};
    return report;
}

Report run_turnover(const ExperimentConfig& config, const MarketData& data, Progress progress) {
    config.validate();
    const auto model = fit(config, data.prices, data.esg);
    const auto methods = comparison_methods(config);
    const std::size_t n = model.size();

    Rng rng(derive_seed(config.seed, "turnover", "events", 0));
    std::vector<Eigen::VectorXd> z_old, z_new;
    for (std::size_t e = 0; e < config.turnover_events; ++e) {
        Eigen::VectorXd z(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.uniform();
        Eigen::VectorXd moved = z;
        for (Eigen::Index i = 0; i < moved.size(); ++i) moved(i) += rng.normal(0.0, config.turnover_perturbation_sd);
        if (config.candidate_scaling == CandidateScaling::UnitSum) {
            if (z.sum() > 0.0) z /= z.sum();
            if (moved.sum() > 0.0) moved /= moved.sum();
        }
        z_old.push_back(std::move(z));
        z_new.push_back(std::move(moved));
    }

    Report report;
    report.experiment = "turnover";
    report.parameters = base_parameters(config, data, model);
    report.parameters["events"] = config.turnover_events;
    report.parameters["perturbation_sd"] = config.turnover_perturbation_sd;
    report.parameters["rebalances_per_year"] = config.turnover_rebalances_per_year;
    report.parameters["cost_rate_bps"] = config.cost_rate_bps;
    report.parameters["candidate_scaling"] = to_string(config.candidate_scaling);
    report.parameters["methods"] = method_ids(methods);
    add_model_warnings(report, model);
    report.notes.push_back(
        "rebalancing events (interpretation): w_old repairs a uniform candidate z, w_new repairs z plus independent "
        "N(0, perturbation_sd^2) noise per coordinate");
    report.notes.push_back(
        "net_sharpe is a proxy, not a cost-aware backtest: gross_sharpe - (cost_bps / 1e4) * rebalances_per_year / "
        "sigma_annual of the new portfolio");

    Table summary{"methods",
                  {"method", "mean_turnover", "mean_cost_bps", "mean_gross_sharpe", "mean_net_sharpe",
                   "wilcoxon_statistic", "p_value_vs_euclidean"},
                  {}};
    Table events{"events", {"event", "method", "turnover", "cost_bps", "gross_sharpe", "net_sharpe"}, {}};
    std::vector<std::vector<double>> turnover(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m) {
        const auto method = make_method(methods[m], config.method_params());
        const auto before = repair_all(z_old, model, config.constraints, method, config.threads);
        const auto after = repair_all(z_new, model, config.constraints, method, config.threads);
        std::vector<double> cost, gross, net;
        for (std::size_t e = 0; e < before.size(); ++e) {
            const auto tc = turnover_cost(before[e].portfolio, after[e].portfolio, config.cost_rate_bps);
            const double g = safe_sharpe(after[e].portfolio, model, config.r_f);
            const double sigma = std::sqrt(evaluate(after[e].portfolio, model).variance);
            const double ns = std::isfinite(g) && sigma > 0.0
                                  ? net_sharpe_proxy(g, tc.cost_bps, sigma, config.turnover_rebalances_per_year)
                                  : kNaN;
            turnover[m].push_back(tc.turnover);
            cost.push_back(tc.cost_bps);
            gross.push_back(g);
            net.push_back(ns);
            events.add_row({count(e), method_label(methods[m]), tc.turnover, tc.cost_bps, number(g), number(ns)});
        }
        const auto test = m == 0 ? Paired{} : paired_test(turnover[m], turnover[0]);
        summary.add_row({method_label(methods[m]), number(mean_of(turnover[m])), number(mean_of(cost)),
                         number(mean_of(gross)), number(mean_of(net)), test.statistic, test.p_value});
        say(progress, "[turnover] " + method_label(methods[m]) + " done (" + std::to_string(m + 1) + "/" +
                          std::to_string(methods.size()) + ")");
    }
    report.tables = {std::move(summary), std::move(events)};
    return report;
}

Report run_optimize(const ExperimentConfig& input, const MarketData& data, bool tune, Progress progress) {
    input.validate();
    ExperimentConfig config = input;
    Report report;
    report.experiment = "optimize";

    Table tuning{"tuning", {"lambda", "gamma", "mean_insample_sharpe", "selected"}, {}};
    if (tune) {
        const PriceHistory train = config.split_boundaries.empty()
                                       ? data.prices
                                       : split_prices(data.prices, config.split_boundaries.front()).first;
        if (train.num_dates() < 3) throw InsufficientDataError("tuning segment has fewer than three price rows");
        const auto model = fit(config, train, data.esg);
        Rng rng(derive_seed(config.seed, "tune", "candidates", 0));
        const auto candidates = draw_candidates(rng, config.n_candidates, model.size(), config.candidate_scaling);
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_row = 0;
        for (double lambda : config.tune_lambdas) {
            for (double gamma : config.tune_gammas) {
                const auto method = make_method(MethodName::RaCasp, MethodParams{lambda, gamma, config.r_f});
                std::vector<double> sharpe;
                for (const auto& r : repair_all(candidates, model, config.constraints, method, config.threads)) {
                    sharpe.push_back(safe_sharpe(r.portfolio, model, config.r_f));
                }
                const double mean = mean_of(sharpe);
                if (mean > best) {
                    best = mean;
                    best_row = tuning.rows.size();
                    config.ra_lambda = lambda;
                    config.ra_gamma = gamma;
                }
                tuning.add_row({lambda, gamma, number(mean), false});
            }
        }
        if (!tuning.rows.empty()) tuning.rows[best_row][3] = true;
        say(progress, "[optimize] tuning selected lambda=" + std::to_string(config.ra_lambda) +
                          " gamma=" + std::to_string(config.ra_gamma));
    }

    const auto model = fit(config, data.prices, data.esg);
    const auto methods = comparison_methods(config);
    const std::size_t repeats = config.repeats;
    const std::size_t jobs = methods.size() * repeats;

    std::vector<std::optional<MogwoResult>> results(jobs);
    std::vector<std::uint64_t> seeds(jobs);
    for (std::size_t j = 0; j < jobs; ++j) {
        seeds[j] = derive_seed(config.seed, "optimize", method_id(methods[j / repeats]), j % repeats);
    }
    std::atomic<std::size_t> finished{0};
    parallel_for(jobs, config.threads, [&](std::size_t j) {
        MogwoConfig mc = config.mogwo;
        mc.seed = seeds[j];
        mc.risk_free = config.r_f;
        results[j] = optimize(model, config.constraints, make_method(methods[j / repeats], config.method_params()), mc);
        say(progress, "[optimize] " + method_label(methods[j / repeats]) + " run " + std::to_string(j % repeats) +
                          " done (" + std::to_string(++finished) + "/" + std::to_string(jobs) + ")");
    });

    std::vector<std::vector<Objectives>> fronts;
    for (const auto& r : results) fronts.push_back(r->archive.front());
    const Objectives reference = hypervolume_reference(fronts);

    report.parameters = base_parameters(config, data, model);
    report.parameters["repeats"] = repeats;
    report.parameters["population"] = config.mogwo.population;
    report.parameters["iterations"] = config.mogwo.iterations;
    report.parameters["archive_capacity"] = config.mogwo.archive_capacity;
    report.parameters["grid_divisions"] = config.mogwo.grid_divisions;
    report.parameters["leader_pressure"] = config.mogwo.leader_pressure;
    report.parameters["tuned"] = tune;
    report.parameters["methods"] = method_ids(methods);
    report.parameters["hypervolume_reference"] = {
        {"variance", reference.variance}, {"return", reference.ret}, {"esg", reference.esg}};
    add_model_warnings(report, model);
    report.notes.push_back(
        "hypervolume is computed on (variance, -return, -esg) against the nadir of all archives in this report pushed "
        "out by 5% of each objective's range");
    report.notes.push_back(
        "best_return is reported both as the mean of per-run maxima and as the maximum over all runs");

    Table runs{"runs",
               {"method", "run", "seed", "archive_size", "best_sharpe", "best_return", "min_variance", "hypervolume",
                "hv_excluded"},
               {}};
    Table summary{"methods",
                  {"method", "runs", "mean_best_sharpe", "sd_best_sharpe", "mean_best_return", "overall_best_return",
                   "mean_hypervolume", "wilcoxon_statistic", "p_value_vs_euclidean"},
                  {}};
    std::vector<std::vector<double>> best_sharpe(methods.size()), best_return(methods.size()), hv(methods.size());
    auto archives = nlohmann::ordered_json::array();
    std::string runlog;
    for (std::size_t j = 0; j < jobs; ++j) {
        const std::size_t m = j / repeats;
        const std::size_t run = j % repeats;
        const auto& archive = results[j]->archive;
        std::vector<double> sharpe, rets;
        double min_var = kNaN;
        for (const auto& member : archive.members()) {
            sharpe.push_back(safe_sharpe(member.portfolio, model, config.r_f));
            rets.push_back(member.objectives.ret);
            if (!(member.objectives.variance >= min_var)) min_var = member.objectives.variance;
        }
        const auto volume = hypervolume(fronts[j], reference);
        best_sharpe[m].push_back(max_of(sharpe));
        best_return[m].push_back(max_of(rets));
        hv[m].push_back(volume.value);
        runs.add_row({method_label(methods[m]), count(run), std::to_string(seeds[j]), count(archive.size()),
                      number(best_sharpe[m].back()), number(best_return[m].back()), number(min_var), volume.value,
                      count(volume.excluded)});

        nlohmann::ordered_json entry;
        entry["method"] = method_label(methods[m]);
        entry["run"] = run;
        entry["seed"] = std::to_string(seeds[j]);
        entry["archive"] = to_json(archive);
        archives.push_back(std::move(entry));

        for (const auto& rec : results[j]->log.records) {
            nlohmann::ordered_json line;
            line["method"] = method_label(methods[m]);
            line["run"] = run;
            line["iter"] = rec.iter;
            line["archive_size"] = rec.archive_size;
            line["best_sharpe"] = std::isfinite(rec.best_sharpe) ? nlohmann::ordered_json(rec.best_sharpe)
                                                                 : nlohmann::ordered_json(nullptr);
            line["min_variance"] = rec.min_variance;
            line["max_return"] = rec.max_return;
            runlog += line.dump() + "\n";
        }
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
        const auto test = m == 0 ? Paired{} : paired_test(best_sharpe[m], best_sharpe[0]);
        summary.add_row({method_label(methods[m]), count(repeats), number(mean_of(best_sharpe[m])),
                         number(sd_of(best_sharpe[m])), number(mean_of(best_return[m])),
                         number(max_of(best_return[m])), number(mean_of(hv[m])), test.statistic, test.p_value});
    }

    report.tables = {std::move(summary), std::move(runs)};
    if (tune) report.tables.push_back(std::move(tuning));
    report.extra["archives"] = std::move(archives);
    report.attachments.emplace_back("runlog.jsonl", std::move(runlog));
    return report;
}

Report run_experiment(const std::string& experiment, const ExperimentConfig& config, const MarketData& data,
                      bool tune, Progress progress) {
    if (experiment == "ablation") return run_ablation(config, data, progress);
    if (experiment == "oos") return run_oos(config, data, progress);
    if (experiment == "turnover") return run_turnover(config, data, progress);
    if (experiment == "optimize") return run_optimize(config, data, tune, progress);
    throw ConfigError("unknown experiment '" + experiment + "'");
}

nlohmann::ordered_json to_json(const RunManifest& manifest) {
    nlohmann::ordered_json j;
    j["schema"] = kManifestSchema;
    j["version"] = kArtifactVersion;
    j["experiment"] = manifest.experiment;
    j["tune"] = manifest.tune;
    j["format"] = manifest.format == ReportFormat::Json ? "json" : manifest.format == ReportFormat::Csv ? "csv" : "both";
    j["config"] = to_json(manifest.config);
    j["data_fingerprint"] = manifest.data_fingerprint;
    j["stamp"] = manifest.stamp;
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;
    j["outputs"] = manifest.outputs;
    return j;
}

RunManifest manifest_from_json(const nlohmann::ordered_json& doc) {
    if (doc.value("schema", "") != kManifestSchema) throw ConfigError("not a run manifest");
    RunManifest m;
    try {
        m.experiment = doc.at("experiment").get<std::string>();
        m.tune = doc.at("tune").get<bool>();
        m.format = parse_report_format(doc.at("format").get<std::string>());
        std::string text;
        for (const auto& [key, value] : doc.at("config").items()) text += key + " = " + value.get<std::string>() + "\n";
        std::istringstream in(text);
        m.config = parse_config(in);
        m.data_fingerprint = doc.at("data_fingerprint").get<std::string>();
        m.stamp = doc.at("stamp").get<std::string>();
        m.started_at = doc.at("started_at").get<std::string>();
        m.finished_at = doc.at("finished_at").get<std::string>();
        m.outputs = doc.at("outputs").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

}  // namespace casp
