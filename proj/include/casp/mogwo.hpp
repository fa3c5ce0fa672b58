#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "casp/market_data.hpp"
#include "casp/objectives.hpp"
#include "casp/projection.hpp"
#include "casp/repair.hpp"
#include "casp/rng.hpp"

namespace casp {

struct Wolf {
    Eigen::VectorXd position;  ///< raw search-space position
    Portfolio portfolio;       ///< repaired position
    Objectives objectives;     ///< evaluated on the repaired portfolio
};

struct ArchiveMember {
    Portfolio portfolio;
    Objectives objectives;
    Eigen::VectorXd position;
};

/// Bounded set of mutually non-dominated solutions with an adaptive
/// hypergrid for diversity.
///
/// The grid spans each objective's current range inflated by 10% on both
/// sides, split into `grid_divisions` cells per objective, and is rebuilt
/// after every change. When an insertion overflows the capacity, one member
/// of the most crowded cell (ties: lowest cell id) is evicted: the oldest
/// member that is not the sole holder of an objective extreme, or the oldest
/// member if every candidate holds one.
class ParetoArchive {
public:
    explicit ParetoArchive(std::size_t capacity = 30, std::size_t grid_divisions = 10);

    /// Rejects candidates dominated by, or equal in objectives to, a member;
    /// otherwise evicts the members it dominates and adds it. Returns true if
    /// the candidate is in the archive afterwards.
    bool insert(ArchiveMember candidate);

    /// Roulette over occupied cells with weight count^-pressure, then a
    /// uniform member of the chosen cell. Members listed in `exclude` are
    /// skipped unless that would leave nothing to choose from.
    std::size_t select_leader(Rng& rng, std::span<const std::size_t> exclude, double pressure = 4.0) const;

    const std::vector<ArchiveMember>& members() const { return members_; }
    const std::vector<std::size_t>& cells() const { return cells_; }
    std::size_t size() const { return members_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t grid_divisions() const { return divisions_; }
    bool empty() const { return members_.empty(); }

    std::vector<Objectives> front() const;

private:
    void rebuild_grid();
    void evict_one();

    std::size_t capacity_;
    std::size_t divisions_;
    std::vector<ArchiveMember> members_;
    std::vector<std::size_t> cells_;
};

struct MogwoConfig {
    std::size_t population = 50;
    std::size_t iterations = 100;
    std::size_t archive_capacity = 30;
    std::uint64_t seed = 1;
    std::size_t grid_divisions = 10;
    double leader_pressure = 4.0;
    double risk_free = 0.045;  ///< used for the best-Sharpe column of the run log

    void validate() const;
};

struct IterationRecord {
    std::size_t iter = 0;
    std::size_t archive_size = 0;
    double best_sharpe = 0.0;
    double min_variance = 0.0;
    double max_return = 0.0;

    bool operator==(const IterationRecord&) const = default;
};

struct RunLog {
    std::vector<IterationRecord> records;

    /// One JSON object per line: iter, archive_size, best_sharpe,
    /// min_variance, max_return.
    std::string to_jsonl() const;
};

struct MogwoResult {
    ParetoArchive archive;
    RunLog log;
};

/// Multi-objective grey wolf optimizer. Positions start uniform in [0, 1]^N,
/// move toward three archive leaders with the canonical GWO update
/// (coefficient a decays linearly from 2 to 0), are clamped to [-1, 2]^N and
/// repaired before evaluation. Record 0 of the log describes the initial
/// population; records 1..iterations follow each update sweep.
MogwoResult optimize(const MarketModel& model, const ConstraintSet& constraints, const RepairMethod& method,
                     const MogwoConfig& config);

nlohmann::ordered_json to_json(const ParetoArchive& archive);

}  // namespace casp
