#include "casp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "casp/error.hpp"

namespace casp {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    while (!s.empty()) {
        const auto comma = s.find(',');
        const auto item = trim(s.substr(0, comma));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
    }
    return value;
}

std::string format_double(double x) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

template <typename T>
std::string format_list(const std::vector<T>& xs, auto&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += fmt(xs[i]);
    }
    return out;
}

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, std::string_view, const std::filesystem::path&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field number_field(std::string key, T ExperimentConfig::*member) {
    return {key,
            [key, member](ExperimentConfig& c, std::string_view v, const auto&) { c.*member = parse_number<T>(key, v); },
            [member](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return format_double(c.*member);
                } else {
                    return std::to_string(c.*member);
                }
            }};
}

template <typename T, typename S>
Field nested_field(std::string key, S ExperimentConfig::*outer, T S::*inner) {
    return {key,
            [key, outer, inner](ExperimentConfig& c, std::string_view v, const auto&) {
                (c.*outer).*inner = parse_number<T>(key, v);
            },
            [outer, inner](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return format_double((c.*outer).*inner);
                } else {
                    return std::to_string((c.*outer).*inner);
                }
            }};
}

std::string resolve_path(std::string_view v, const std::filesystem::path& base) {
    std::filesystem::path p{std::string(v)};
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal().string();
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"data_source",
                     [](ExperimentConfig& c, std::string_view v, const auto& base) {
                         c.data_source = v == "synthetic" ? std::string(v) : resolve_path(v, base);
                     },
                     [](const ExperimentConfig& c) { return c.data_source; }});
        f.push_back({"esg_source",
                     [](ExperimentConfig& c, std::string_view v, const auto& base) {
                         c.esg_source = v.empty() ? std::string{} : resolve_path(v, base);
                     },
                     [](const ExperimentConfig& c) { return c.esg_source; }});
        f.push_back(nested_field("synthetic.seed", &ExperimentConfig::synthetic, &SynthSpec::seed));
        f.push_back(nested_field("synthetic.n_assets", &ExperimentConfig::synthetic, &SynthSpec::n_assets));
        f.push_back(nested_field("synthetic.n_factors", &ExperimentConfig::synthetic, &SynthSpec::n_factors));
        f.push_back(nested_field("synthetic.horizon", &ExperimentConfig::synthetic, &SynthSpec::horizon));
        f.push_back(nested_field("synthetic.idio_scale", &ExperimentConfig::synthetic, &SynthSpec::idio_scale));
        f.push_back(
            nested_field("synthetic.regime_shift_row", &ExperimentConfig::synthetic, &SynthSpec::regime_shift_row));
        f.push_back(
            nested_field("synthetic.regime_shift_drift", &ExperimentConfig::synthetic, &SynthSpec::regime_shift_drift));
        f.push_back({"synthetic.start",
                     [](ExperimentConfig& c, std::string_view v, const auto&) { c.synthetic.start = Date::parse(v); },
                     [](const ExperimentConfig& c) { return c.synthetic.start.to_string(); }});
        f.push_back(nested_field("constraints.k", &ExperimentConfig::constraints, &ConstraintSet::k));
        f.push_back(nested_field("constraints.lower", &ExperimentConfig::constraints, &ConstraintSet::lower));
        f.push_back(nested_field("constraints.upper", &ExperimentConfig::constraints, &ConstraintSet::upper));
        f.push_back({"methods",
                     [](ExperimentConfig& c, std::string_view v, const auto&) {
                         c.methods.clear();
                         for (const auto item : split_list(v)) {
                             try {
                                 c.methods.push_back(parse_method(item));
                             } catch (const ArgumentError& e) {
                                 throw ConfigError(std::string("config key 'methods': ") + e.what());
                             }
                         }
                     },
                     [](const ExperimentConfig& c) {
                         return format_list(c.methods, [](MethodName m) { return std::string(method_id(m)); });
                     }});
        f.push_back(number_field("n_candidates", &ExperimentConfig::n_candidates));
        f.push_back(number_field("seed", &ExperimentConfig::seed));
        f.push_back({"split_boundaries",
                     [](ExperimentConfig& c, std::string_view v, const auto&) {
                         c.split_boundaries.clear();
                         for (const auto item : split_list(v)) {
                             try {
                                 c.split_boundaries.push_back(Date::parse(item));
                             } catch (const Error& e) {
                                 throw ConfigError(std::string("config key 'split_boundaries': ") + e.what());
                             }
                         }
                     },
                     [](const ExperimentConfig& c) {
                         return format_list(c.split_boundaries, [](const Date& d) { return d.to_string(); });
                     }});
        f.push_back({"candidate_scaling",
                     [](ExperimentConfig& c, std::string_view v, const auto&) {
                         if (v == "unit_sum") {
                             c.candidate_scaling = CandidateScaling::UnitSum;
                         } else if (v == "none") {
                             c.candidate_scaling = CandidateScaling::None;
                         } else {
                             throw ConfigError("config key 'candidate_scaling': expected unit_sum or none");
                         }
                     },
                     [](const ExperimentConfig& c) { return std::string(to_string(c.candidate_scaling)); }});
        f.push_back(number_field("r_f", &ExperimentConfig::r_f));
        f.push_back(number_field("cost_rate_bps", &ExperimentConfig::cost_rate_bps));
        f.push_back(number_field("shrinkage", &ExperimentConfig::shrinkage));
        f.push_back(number_field("annualization", &ExperimentConfig::annualization));
        f.push_back(number_field("turnover.events", &ExperimentConfig::turnover_events));
        f.push_back(number_field("turnover.perturbation_sd", &ExperimentConfig::turnover_perturbation_sd));
        f.push_back(number_field("turnover.rebalances_per_year", &ExperimentConfig::turnover_rebalances_per_year));
        f.push_back(nested_field("mogwo.population", &ExperimentConfig::mogwo, &MogwoConfig::population));
        f.push_back(nested_field("mogwo.iterations", &ExperimentConfig::mogwo, &MogwoConfig::iterations));
        f.push_back(nested_field("mogwo.archive_capacity", &ExperimentConfig::mogwo, &MogwoConfig::archive_capacity));
        f.push_back(nested_field("mogwo.grid_divisions", &ExperimentConfig::mogwo, &MogwoConfig::grid_divisions));
        f.push_back(nested_field("mogwo.leader_pressure", &ExperimentConfig::mogwo, &MogwoConfig::leader_pressure));
        f.push_back(number_field("repeats", &ExperimentConfig::repeats));
        f.push_back(number_field("ra_params.lambda", &ExperimentConfig::ra_lambda));
        f.push_back(number_field("ra_params.gamma", &ExperimentConfig::ra_gamma));
        f.push_back({"tune.lambdas",
                     [](ExperimentConfig& c, std::string_view v, const auto&) {
                         c.tune_lambdas.clear();
                         for (const auto item : split_list(v)) c.tune_lambdas.push_back(parse_number<double>("tune.lambdas", item));
                     },
                     [](const ExperimentConfig& c) { return format_list(c.tune_lambdas, format_double); }});
        f.push_back({"tune.gammas",
                     [](ExperimentConfig& c, std::string_view v, const auto&) {
                         c.tune_gammas.clear();
                         for (const auto item : split_list(v)) c.tune_gammas.push_back(parse_number<double>("tune.gammas", item));
                     },
                     [](const ExperimentConfig& c) { return format_list(c.tune_gammas, format_double); }});
        f.push_back(number_field("threads", &ExperimentConfig::threads));
        return f;
    }();
    return table;
}

}  // namespace

std::string_view to_string(CandidateScaling scaling) {
    return scaling == CandidateScaling::UnitSum ? "unit_sum" : "none";
}

void ExperimentConfig::validate() const {
    if (methods.empty()) throw ConfigError("methods must not be empty");
    if (n_candidates < 1) throw ConfigError("n_candidates must be at least 1");
    if (repeats < 1) throw ConfigError("repeats must be at least 1");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in [0, 1]");
    if (!(annualization > 0.0)) throw ConfigError("annualization must be positive");
    if (!(cost_rate_bps >= 0.0)) throw ConfigError("cost_rate_bps must be non-negative");
    if (!(turnover_perturbation_sd >= 0.0)) throw ConfigError("turnover.perturbation_sd must be non-negative");
    if (!(turnover_rebalances_per_year > 0.0)) throw ConfigError("turnover.rebalances_per_year must be positive");
    if (turnover_events < 1) throw ConfigError("turnover.events must be at least 1");
    if (!(ra_lambda >= 0.0)) throw ConfigError("ra_params.lambda must be non-negative");
    if (!(ra_gamma >= 0.0)) throw ConfigError("ra_params.gamma must be non-negative");
    if (tune_lambdas.empty() || tune_gammas.empty()) throw ConfigError("tuning grids must not be empty");
    if (is_synthetic()) {
        if (synthetic.n_assets < 1 || synthetic.n_factors < 1) throw ConfigError("synthetic market needs assets and factors");
        if (synthetic.horizon < 3) throw ConfigError("synthetic.horizon must be at least 3");
    }
    if (!std::is_sorted(split_boundaries.begin(), split_boundaries.end()) ||
        std::adjacent_find(split_boundaries.begin(), split_boundaries.end()) != split_boundaries.end()) {
        throw ConfigError("split_boundaries must be strictly increasing");
    }
    try {
        constraints.validate();
        mogwo.validate();
    } catch (const InfeasibleConstraintsError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
    ExperimentConfig config;
    std::set<std::string, std::less<>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(view.substr(0, eq));
        const auto value = trim(view.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
        if (it == table.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
        if (!seen.insert(std::string(key)).second) {
            throw ConfigError("config line " + std::to_string(line_no) + ": key '" + std::string(key) + "' repeated");
        }
        try {
            it->set(config, value, base_dir);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError("config key '" + std::string(key) + "': " + e.what());
        }
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    return parse_config(in, path.parent_path());
}

std::string to_config_text(const ExperimentConfig& config) {
    std::ostringstream out;
    for (const auto& f : fields()) out << f.key << " = " << f.get(config) << '\n';
    return out.str();
}

nlohmann::ordered_json to_json(const ExperimentConfig& config) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& f : fields()) j[f.key] = f.get(config);
    return j;
}

}  // namespace casp
