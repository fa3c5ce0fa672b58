#include "casp/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "casp/error.hpp"
#include "casp/rng.hpp"

namespace casp {

namespace {

constexpr double kVarianceFloor = 1e-10;

std::string_view trim(std::string_view s) {
    const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
    while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

ReturnPanel returns_of(const std::vector<std::string>& ids, const std::vector<Date>& dates,
                       const Eigen::MatrixXd& prices) {
    const auto t = prices.rows();
    if (t < 2) {
        throw InsufficientDataError("need at least 2 price rows to compute returns, got " + std::to_string(t));
    }
    ReturnPanel panel;
    panel.asset_ids = ids;
    panel.dates.assign(dates.begin() + 1, dates.end());
    panel.returns = (prices.bottomRows(t - 1).array() / prices.topRows(t - 1).array()).log().matrix();
    return panel;
}

PriceHistory slice_rows(const PriceHistory& p, std::size_t begin, std::size_t end) {
    PriceHistory out;
    out.asset_ids = p.asset_ids;
    out.dates.assign(p.dates.begin() + static_cast<std::ptrdiff_t>(begin),
                     p.dates.begin() + static_cast<std::ptrdiff_t>(end));
    out.prices = p.prices.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    return out;
}

}  // namespace

Date Date::parse(std::string_view iso) {
    iso = trim(iso);
    int y = 0, m = 0, d = 0;
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' || !parse_int(iso.substr(0, 4), y) ||
        !parse_int(iso.substr(5, 2), m) || !parse_int(iso.substr(8, 2), d)) {
        throw FormatError("invalid ISO date '" + std::string(iso) + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw FormatError("invalid calendar date '" + std::string(iso) + "'");
    return Date{y, static_cast<unsigned>(m), static_cast<unsigned>(d)};
}

std::string Date::to_string() const {
    std::ostringstream os;
    os << std::setfill('0') << std::setw(4) << year << '-' << std::setw(2) << month << '-' << std::setw(2) << day;
    return os.str();
}

void PriceHistory::validate() const {
    if (static_cast<std::size_t>(prices.cols()) != asset_ids.size()) {
        throw FormatError("price matrix has " + std::to_string(prices.cols()) + " columns but " +
                          std::to_string(asset_ids.size()) + " asset ids");
    }
    if (static_cast<std::size_t>(prices.rows()) != dates.size()) {
        throw FormatError("price matrix row count does not match date count");
    }
    for (std::size_t i = 1; i < dates.size(); ++i) {
        if (!(dates[i - 1] < dates[i])) throw FormatError("dates not strictly increasing at " + dates[i].to_string());
    }
    if (prices.size() > 0 && !(prices.array() > 0.0).all()) throw FormatError("non-positive price");
}

LoadedPrices parse_prices(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty price file");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || !iequals(header.front(), "date")) {
        throw FormatError("price header must start with 'date' followed by at least one ticker");
    }
    LoadedPrices result;
    auto& hist = result.history;
    std::unordered_set<std::string> seen;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c].empty()) throw FormatError("empty ticker in header column " + std::to_string(c));
        std::string id(header[c]);
        if (!seen.insert(id).second) throw FormatError("duplicate ticker '" + id + "'");
        hist.asset_ids.push_back(std::move(id));
    }
    const std::size_t n = hist.asset_ids.size();

    struct Row {
        Date date;
        std::vector<double> values;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        Row row;
        bool usable = cells.size() == n + 1;
        if (usable) {
            try {
                row.date = Date::parse(cells[0]);
            } catch (const FormatError&) {
                usable = false;
            }
        }
        row.values.resize(n);
        for (std::size_t c = 0; usable && c < n; ++c) {
            usable = parse_double(cells[c + 1], row.values[c]) && row.values[c] > 0.0;
        }
        if (!usable) {
            ++result.dropped_rows;
            continue;
        }
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].date == rows[i - 1].date) throw FormatError("duplicate date " + rows[i].date.to_string());
    }
    if (rows.size() < 2) {
        throw InsufficientDataError("price file has " + std::to_string(rows.size()) + " usable rows, need at least 2");
    }
    hist.prices.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        hist.dates.push_back(rows[t].date);
        for (std::size_t c = 0; c < n; ++c) {
            hist.prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t].values[c];
        }
    }
    return result;
}

LoadedPrices load_prices(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    return parse_prices(in);
}

void write_prices(std::ostream& out, const PriceHistory& prices) {
    out << "date";
    for (const auto& id : prices.asset_ids) out << ',' << id;
    out << '\n';
    out << std::setprecision(17);
    for (Eigen::Index t = 0; t < prices.prices.rows(); ++t) {
        out << prices.dates[static_cast<std::size_t>(t)].to_string();
        for (Eigen::Index c = 0; c < prices.prices.cols(); ++c) out << ',' << prices.prices(t, c);
        out << '\n';
    }
}

EsgInputs parse_esg(std::istream& in, const std::vector<std::string>& asset_ids) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty ESG file");
    const auto header = split_csv_line(line);
    if (header.size() != 3 || !iequals(header[0], "ticker") || !iequals(header[1], "overall_risk") ||
        !iequals(header[2], "sector_proxy")) {
        throw FormatError("ESG header must be 'ticker,overall_risk,sector_proxy'");
    }
    std::unordered_map<std::string, std::pair<int, double>> by_ticker;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        int risk = 0;
        double proxy = 0.0;
        if (cells.size() != 3 || !parse_int(cells[1], risk) || !parse_double(cells[2], proxy)) {
            throw FormatError("malformed ESG row '" + line + "'");
        }
        if (risk < 0 || risk > 10 || proxy < 0.0 || proxy > 100.0) {
            throw FormatError("ESG values out of range in row '" + line + "'");
        }
        by_ticker[std::string(cells[0])] = {risk, proxy};
    }
    EsgInputs esg;
    for (const auto& id : asset_ids) {
        const auto it = by_ticker.find(id);
        if (it == by_ticker.end()) throw FormatError("ESG file has no row for ticker '" + id + "'");
        esg.overall_risk.push_back(it->second.first);
        esg.sector_proxy.push_back(it->second.second);
    }
    return esg;
}

EsgInputs load_esg(const std::filesystem::path& path, const std::vector<std::string>& asset_ids) {
    auto in = open_for_read(path);
    return parse_esg(in, asset_ids);
}

EsgInputs neutral_esg(std::size_t n) {
    return EsgInputs{std::vector<int>(n, 5), std::vector<double>(n, 50.0)};
}

EsgInputs synth_esg(std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "synth", "esg", 0));
    EsgInputs esg;
    for (std::size_t i = 0; i < n; ++i) {
        esg.overall_risk.push_back(static_cast<int>(rng.below(11)));
        esg.sector_proxy.push_back(std::round(rng.uniform(30.0, 90.0)));
    }
    return esg;
}

Eigen::VectorXd esg_composite(const EsgInputs& inputs) {
    if (inputs.overall_risk.size() != inputs.sector_proxy.size()) {
        throw ArgumentError("ESG input vectors differ in length");
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const double governance = (10.0 - inputs.overall_risk[i]) * 10.0;
        out(static_cast<Eigen::Index>(i)) = 0.4 * governance + 0.6 * inputs.sector_proxy[i];
    }
    return out;
}

ReturnPanel compute_returns(const PriceHistory& prices) {
    return returns_of(prices.asset_ids, prices.dates, prices.prices);
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& returns) {
    const auto t = returns.rows();
    if (t < 2) throw InsufficientDataError("covariance needs at least 2 observations");
    const Eigen::RowVectorXd mean = returns.colwise().mean();
    const Eigen::MatrixXd centered = returns.rowwise() - mean;
    return (centered.transpose() * centered) / static_cast<double>(t - 1);
}

MarketModel estimate_model(const ReturnPanel& returns, const EstimationParams& params, const EsgInputs& esg) {
    const auto n = static_cast<Eigen::Index>(returns.num_assets());
    if (returns.returns.rows() < 2) {
        throw InsufficientDataError("model estimation needs at least 2 return observations, got " +
                                    std::to_string(returns.returns.rows()));
    }
    if (returns.returns.cols() != n) throw ArgumentError("return matrix width does not match asset ids");
    if (!(params.shrinkage >= 0.0 && params.shrinkage <= 1.0)) throw ArgumentError("shrinkage must lie in [0, 1]");
    if (!(params.annualization > 0.0)) throw ArgumentError("annualization must be positive");
    if (esg.size() != static_cast<std::size_t>(n)) throw ArgumentError("ESG inputs do not match the asset universe");

    MarketModel model;
    model.asset_ids = returns.asset_ids;
    model.meta.shrinkage = params.shrinkage;
    model.meta.annualization = params.annualization;
    model.mu = params.annualization * returns.returns.colwise().mean().transpose();

    Eigen::MatrixXd s_ann = params.annualization * sample_covariance(returns.returns);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (s_ann(i, i) < kVarianceFloor) {
            model.meta.warnings.push_back("asset '" + returns.asset_ids[static_cast<std::size_t>(i)] +
                                          "' has zero variance; floored at 1e-10");
            s_ann(i, i) = kVarianceFloor;
        }
    }
    const double diag_scale = s_ann.trace() / static_cast<double>(n);
    Eigen::MatrixXd omega = (1.0 - params.shrinkage) * s_ann;
    omega.diagonal().array() += params.shrinkage * diag_scale;
    model.omega = 0.5 * (omega + omega.transpose());
    model.esg = esg_composite(esg);
    model.meta.condition_number = condition_number(model.omega);
    return model;
}

double condition_number(const Eigen::MatrixXd& symmetric) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric, Eigen::EigenvaluesOnly);
    const auto& ev = solver.eigenvalues();
    const double lo = ev.minCoeff();
    const double hi = ev.cwiseAbs().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

std::pair<PriceHistory, PriceHistory> split_prices(const PriceHistory& prices, const Date& boundary) {
    const auto it = std::lower_bound(prices.dates.begin(), prices.dates.end(), boundary);
    const auto cut = static_cast<std::size_t>(it - prices.dates.begin());
    return {slice_rows(prices, 0, cut), slice_rows(prices, cut, prices.num_dates())};
}

TemporalSplit split_temporal(const PriceHistory& prices, const Date& boundary) {
    if (prices.dates.empty() || !(prices.dates.front() < boundary) || !(boundary <= prices.dates.back())) {
        throw ArgumentError("split boundary " + boundary.to_string() + " lies outside the price history");
    }
    auto [train, test] = split_prices(prices, boundary);
    if (train.num_dates() < 2 || test.num_dates() < 2) {
        throw ArgumentError("split boundary " + boundary.to_string() +
                            " leaves fewer than 2 price rows on one side");
    }
    return TemporalSplit{compute_returns(train), compute_returns(test), boundary};
}

PriceHistory synth_market(const SynthSpec& spec) {
    if (spec.n_assets < 2) throw ArgumentError("synthetic market needs at least 2 assets");
    if (spec.n_factors < 1) throw ArgumentError("synthetic market needs at least 1 factor");
    if (spec.horizon < 2) throw ArgumentError("synthetic market needs a horizon of at least 2 rows");
    if (!(spec.idio_scale >= 0.0)) throw ArgumentError("idio_scale must be non-negative");

    const auto n = static_cast<Eigen::Index>(spec.n_assets);
    const auto f = static_cast<Eigen::Index>(spec.n_factors);
    Rng rng(derive_seed(spec.seed, "synth", "structure", 0));

    Eigen::VectorXd factor_mean(f), factor_vol(f);
    factor_mean(0) = 0.0004;
    factor_vol(0) = 0.011;
    for (Eigen::Index j = 1; j < f; ++j) {
        factor_mean(j) = rng.normal(0.0, 0.0002);
        factor_vol(j) = rng.uniform(0.004, 0.009);
    }

    Eigen::MatrixXd loadings = Eigen::MatrixXd::Zero(n, f);
    Eigen::VectorXd alpha(n), idio_vol(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        loadings(i, 0) = rng.uniform(0.5, 1.6);
        if (f > 1) {
            const Eigen::Index sector = 1 + i % (f - 1);
            for (Eigen::Index j = 1; j < f; ++j) {
                loadings(i, j) = j == sector ? rng.uniform(0.6, 1.4) : rng.normal(0.0, 0.15);
            }
        }
        alpha(i) = rng.normal(0.0, 0.0003);
        idio_vol(i) = rng.uniform(0.006, 0.022) * spec.idio_scale;
    }

    Eigen::VectorXd shift(f);
    for (Eigen::Index j = 0; j < f; ++j) shift(j) = (j == 0 || j % 2 == 0 ? 1.0 : -1.0) * spec.regime_shift_drift;

    PriceHistory out;
    for (std::size_t i = 0; i < spec.n_assets; ++i) {
        std::ostringstream id;
        id << "S" << std::setfill('0') << std::setw(3) << i;
        out.asset_ids.push_back(id.str());
    }

    Rng path_rng(derive_seed(spec.seed, "synth", "paths", 0));
    out.prices.resize(static_cast<Eigen::Index>(spec.horizon), n);
    out.prices.row(0).setConstant(100.0);
    Eigen::VectorXd factors(f), log_price = Eigen::VectorXd::Constant(n, std::log(100.0));
    for (std::size_t t = 1; t < spec.horizon; ++t) {
        const bool shifted = spec.regime_shift_row > 0 && t >= spec.regime_shift_row;
        for (Eigen::Index j = 0; j < f; ++j) {
            factors(j) = factor_mean(j) + (shifted ? shift(j) : 0.0) + factor_vol(j) * path_rng.normal();
        }
        Eigen::VectorXd r = alpha + loadings * factors;
        for (Eigen::Index i = 0; i < n; ++i) r(i) += idio_vol(i) * path_rng.normal();
        log_price += r;
        out.prices.row(static_cast<Eigen::Index>(t)) = log_price.array().exp().matrix().transpose();
    }

    // Business-day calendar starting at spec.start.
    using namespace std::chrono;
    sys_days day{year_month_day{year{spec.start.year}, month{spec.start.month}, std::chrono::day{spec.start.day}}};
    while (out.dates.size() < spec.horizon) {
        const weekday wd{day};
        if (wd != Saturday && wd != Sunday) {
            const year_month_day ymd{day};
            out.dates.push_back(Date{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                                     static_cast<unsigned>(ymd.day())});
        }
        day += days{1};
    }
    return out;
}

nlohmann::ordered_json to_json(const MarketModel& model) {
    nlohmann::ordered_json doc;
    doc["asset_ids"] = model.asset_ids;
    doc["mu"] = std::vector<double>(model.mu.begin(), model.mu.end());
    std::vector<double> omega;
    omega.reserve(static_cast<std::size_t>(model.omega.size()));
    for (Eigen::Index r = 0; r < model.omega.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.omega.cols(); ++c) omega.push_back(model.omega(r, c));
    }
    doc["omega"] = omega;
    doc["esg"] = std::vector<double>(model.esg.begin(), model.esg.end());
    doc["meta"] = {{"shrinkage", model.meta.shrinkage},
                   {"annualization", model.meta.annualization},
                   {"condition_number", model.meta.condition_number}};
    if (!model.meta.warnings.empty()) doc["meta"]["warnings"] = model.meta.warnings;
    return doc;
}

MarketModel model_from_json(const nlohmann::json& doc) {
    try {
        MarketModel model;
        model.asset_ids = doc.at("asset_ids").get<std::vector<std::string>>();
        const auto n = static_cast<Eigen::Index>(model.asset_ids.size());
        const auto mu = doc.at("mu").get<std::vector<double>>();
        const auto omega = doc.at("omega").get<std::vector<double>>();
        const auto esg = doc.at("esg").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(mu.size()) != n || static_cast<Eigen::Index>(esg.size()) != n ||
            static_cast<Eigen::Index>(omega.size()) != n * n) {
            throw FormatError("market model JSON has inconsistent dimensions");
        }
        model.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), n);
        model.esg = Eigen::Map<const Eigen::VectorXd>(esg.data(), n);
        model.omega = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            omega.data(), n, n);
        const auto& meta = doc.at("meta");
        model.meta.shrinkage = meta.at("shrinkage").get<double>();
        model.meta.annualization = meta.at("annualization").get<double>();
        model.meta.condition_number = meta.at("condition_number").get<double>();
        if (meta.contains("warnings")) model.meta.warnings = meta.at("warnings").get<std::vector<std::string>>();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed market model JSON: ") + e.what());
    }
}

}  // namespace casp
