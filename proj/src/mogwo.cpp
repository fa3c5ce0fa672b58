#include "casp/mogwo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

#include "casp/error.hpp"

namespace casp {

namespace {

constexpr double kGridInflation = 0.1;
constexpr double kPositionMin = -1.0;
constexpr double kPositionMax = 2.0;

std::array<double, 3> as_array(const Objectives& o) { return {o.variance, o.ret, o.esg}; }

double best_sharpe_of(const ParetoArchive& archive, double risk_free) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& m : archive.members()) {
        if (m.objectives.variance > 0.0) {
            best = std::max(best, (m.objectives.ret - risk_free) / std::sqrt(m.objectives.variance));
        }
    }
    return best;
}

IterationRecord record_of(std::size_t iter, const ParetoArchive& archive, double risk_free) {
    IterationRecord r;
    r.iter = iter;
    r.archive_size = archive.size();
    r.best_sharpe = best_sharpe_of(archive, risk_free);
    r.min_variance = std::numeric_limits<double>::infinity();
    r.max_return = -std::numeric_limits<double>::infinity();
    for (const auto& m : archive.members()) {
        r.min_variance = std::min(r.min_variance, m.objectives.variance);
        r.max_return = std::max(r.max_return, m.objectives.ret);
    }
    return r;
}

}  // namespace

ParetoArchive::ParetoArchive(std::size_t capacity, std::size_t grid_divisions)
    : capacity_(capacity), divisions_(grid_divisions) {
    if (capacity_ < 1) throw ArgumentError("archive capacity must be at least 1");
    if (divisions_ < 1) throw ArgumentError("archive grid needs at least 1 division");
}

bool ParetoArchive::insert(ArchiveMember candidate) {
    for (const auto& m : members_) {
        if (dominates(m.objectives, candidate.objectives) || m.objectives == candidate.objectives) return false;
    }
    std::erase_if(members_, [&](const ArchiveMember& m) { return dominates(candidate.objectives, m.objectives); });
    const Objectives added = candidate.objectives;
    members_.push_back(std::move(candidate));
    rebuild_grid();
    while (members_.size() > capacity_) evict_one();
    return std::any_of(members_.begin(), members_.end(), [&](const ArchiveMember& m) { return m.objectives == added; });
}

void ParetoArchive::rebuild_grid() {
    cells_.assign(members_.size(), 0);
    if (members_.empty()) return;
    std::array<double, 3> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& m : members_) {
        const auto v = as_array(m.objectives);
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], v[d]);
            hi[d] = std::max(hi[d], v[d]);
        }
    }
    for (int d = 0; d < 3; ++d) {
        const double pad = kGridInflation * (hi[d] - lo[d]);
        lo[d] -= pad;
        hi[d] += pad;
    }
    const auto div = static_cast<double>(divisions_);
    for (std::size_t i = 0; i < members_.size(); ++i) {
        const auto v = as_array(members_[i].objectives);
        std::size_t cell = 0, stride = 1;
        for (int d = 0; d < 3; ++d) {
            std::size_t c = 0;
            if (hi[d] > lo[d]) {
                const double pos = std::floor((v[d] - lo[d]) / (hi[d] - lo[d]) * div);
                c = static_cast<std::size_t>(std::clamp(pos, 0.0, div - 1.0));
            }
            cell += c * stride;
            stride *= divisions_;
        }
        cells_[i] = cell;
    }
}

void ParetoArchive::evict_one() {
    std::map<std::size_t, std::size_t> counts;
    for (const auto c : cells_) ++counts[c];
    std::size_t crowded = counts.begin()->first, most = 0;
    for (const auto& [cell, count] : counts) {
        if (count > most) {
            most = count;
            crowded = cell;
        }
    }

    // Sole holders of an objective extreme are kept when possible.
    std::array<std::size_t, 3> extreme{0, 0, 0};
    for (std::size_t i = 1; i < members_.size(); ++i) {
        const auto& o = members_[i].objectives;
        if (o.variance < members_[extreme[0]].objectives.variance) extreme[0] = i;
        if (o.ret > members_[extreme[1]].objectives.ret) extreme[1] = i;
        if (o.esg > members_[extreme[2]].objectives.esg) extreme[2] = i;
    }
    std::size_t victim = members_.size();
    for (std::size_t i = 0; i < members_.size() && victim == members_.size(); ++i) {
        if (cells_[i] != crowded) continue;
        if (std::find(extreme.begin(), extreme.end(), i) == extreme.end()) victim = i;
    }
    if (victim == members_.size()) {
        victim = static_cast<std::size_t>(std::find(cells_.begin(), cells_.end(), crowded) - cells_.begin());
    }
    members_.erase(members_.begin() + static_cast<std::ptrdiff_t>(victim));
    rebuild_grid();
}

std::size_t ParetoArchive::select_leader(Rng& rng, std::span<const std::size_t> exclude, double pressure) const {
    if (members_.empty()) throw ArgumentError("cannot select a leader from an empty archive");
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < members_.size(); ++i) {
        if (std::find(exclude.begin(), exclude.end(), i) == exclude.end()) pool.push_back(i);
    }
    if (pool.empty()) {
        for (std::size_t i = 0; i < members_.size(); ++i) pool.push_back(i);
    }
    std::map<std::size_t, std::vector<std::size_t>> by_cell;
    for (const auto i : pool) by_cell[cells_[i]].push_back(i);

    std::vector<double> weights;
    std::vector<const std::vector<std::size_t>*> groups;
    double total = 0.0;
    for (const auto& [cell, group] : by_cell) {
        const double w = std::pow(static_cast<double>(group.size()), -pressure);
        weights.push_back(w);
        groups.push_back(&group);
        total += w;
    }
    double pick = rng.uniform() * total;
    std::size_t chosen = groups.size() - 1;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (pick < weights[g]) {
            chosen = g;
            break;
        }
        pick -= weights[g];
    }
    const auto& group = *groups[chosen];
    return group[rng.below(group.size())];
}

std::vector<Objectives> ParetoArchive::front() const {
    std::vector<Objectives> out;
    out.reserve(members_.size());
    for (const auto& m : members_) out.push_back(m.objectives);
    return out;
}

void MogwoConfig::validate() const {
    if (population < 1) throw ConfigError("MOGWO population must be at least 1");
    if (archive_capacity < 1) throw ConfigError("MOGWO archive capacity must be at least 1");
    if (grid_divisions < 1) throw ConfigError("MOGWO grid needs at least 1 division");
}

std::string RunLog::to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
        nlohmann::ordered_json line;
        line["iter"] = r.iter;
        line["archive_size"] = r.archive_size;
        line["best_sharpe"] = r.best_sharpe;
        line["min_variance"] = r.min_variance;
        line["max_return"] = r.max_return;
        out += line.dump();
        out += '\n';
    }
    return out;
}

MogwoResult optimize(const MarketModel& model, const ConstraintSet& constraints, const RepairMethod& method,
                     const MogwoConfig& config) {
    config.validate();
    constraints.validate();
    const auto n = static_cast<Eigen::Index>(model.size());
    if (constraints.k > model.size()) throw ArgumentError("cardinality exceeds the asset universe");

    Rng rng(derive_seed(config.seed, "mogwo", method_id(method.name), 0));
    MogwoResult result{ParetoArchive(config.archive_capacity, config.grid_divisions), {}};
    auto& archive = result.archive;

    const auto repair_wolf = [&](Wolf& wolf, std::size_t iter, std::size_t index) {
        try {
            auto repaired = repair(wolf.position, model, constraints, method);
            wolf.portfolio = std::move(repaired.portfolio);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("MOGWO iteration " + std::to_string(iter) + ", wolf " + std::to_string(index) +
                                       ": " + e.what(),
                                   e.best_iterate(), e.residual());
        }
        wolf.objectives = evaluate(wolf.portfolio, model);
    };

    std::vector<Wolf> pack(config.population);
    for (std::size_t i = 0; i < pack.size(); ++i) {
        pack[i].position.resize(n);
        for (Eigen::Index j = 0; j < n; ++j) pack[i].position(j) = rng.uniform();
        repair_wolf(pack[i], 0, i);
    }
    for (const auto& wolf : pack) archive.insert({wolf.portfolio, wolf.objectives, wolf.position});
    result.log.records.push_back(record_of(0, archive, config.risk_free));

    for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
        const double a = 2.0 * (1.0 - static_cast<double>(iter) / static_cast<double>(config.iterations));
        for (std::size_t i = 0; i < pack.size(); ++i) {
            std::array<std::size_t, 3> leaders{};
            leaders[0] = archive.select_leader(rng, {}, config.leader_pressure);
            leaders[1] = archive.select_leader(rng, std::span(leaders.data(), 1), config.leader_pressure);
            leaders[2] = archive.select_leader(rng, std::span(leaders.data(), 2), config.leader_pressure);

            auto& x = pack[i].position;
            Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
            for (const auto l : leaders) {
                const auto& lead = archive.members()[l].position;
                for (Eigen::Index j = 0; j < n; ++j) {
                    const double coef_a = 2.0 * a * rng.uniform() - a;
                    const double coef_c = 2.0 * rng.uniform();
                    const double dist = std::abs(coef_c * lead(j) - x(j));
                    next(j) += lead(j) - coef_a * dist;
                }
            }
            x = (next / 3.0).cwiseMax(kPositionMin).cwiseMin(kPositionMax);
        }
        for (std::size_t i = 0; i < pack.size(); ++i) repair_wolf(pack[i], iter, i);
        for (const auto& wolf : pack) archive.insert({wolf.portfolio, wolf.objectives, wolf.position});
        result.log.records.push_back(record_of(iter, archive, config.risk_free));
    }
    return result;
}

nlohmann::ordered_json to_json(const ParetoArchive& archive) {
    nlohmann::ordered_json members = nlohmann::ordered_json::array();
    for (const auto& m : archive.members()) {
        nlohmann::ordered_json entry;
        entry["active"] = m.portfolio.active;
        entry["weights"] = std::vector<double>(m.portfolio.weights.begin(), m.portfolio.weights.end());
        entry["variance"] = m.objectives.variance;
        entry["return"] = m.objectives.ret;
        entry["esg"] = m.objectives.esg;
        members.push_back(std::move(entry));
    }
    nlohmann::ordered_json doc;
    doc["capacity"] = archive.capacity();
    doc["grid_divisions"] = archive.grid_divisions();
    doc["members"] = std::move(members);
    return doc;
}

}  // namespace casp
