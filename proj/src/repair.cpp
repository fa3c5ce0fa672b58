#include "casp/repair.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "casp/error.hpp"

namespace casp {

namespace {

constexpr std::array<MethodName, 7> kAllMethods = {MethodName::Euclidean, MethodName::VolNormEuc,
                                                   MethodName::MinVarEuc, MethodName::SharpeEuc,
                                                   MethodName::CaspBasic, MethodName::CaspRetSel,
                                                   MethodName::RaCasp};

Eigen::VectorXd gather(const Eigen::Ref<const Eigen::VectorXd>& v, const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Eigen::Index>(j)) = v(static_cast<Eigen::Index>(idx[j]));
    return out;
}

Eigen::MatrixXd gather_block(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd out(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) {
            out(a, b) = m(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]),
                          static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
        }
    }
    return out;
}

}  // namespace

RepairMethod make_method(MethodName name, const MethodParams& params) {
    RepairMethod m;
    m.name = name;
    switch (name) {
        case MethodName::Euclidean:
            m.selection = {SelectionKind::Abs};
            m.projection = {ProjectionKind::Euclidean};
            break;
        case MethodName::VolNormEuc:
            m.selection = {SelectionKind::VolNorm};
            m.projection = {ProjectionKind::Euclidean};
            break;
        case MethodName::MinVarEuc:
            m.selection = {SelectionKind::MinVar};
            m.projection = {ProjectionKind::Euclidean};
            break;
        case MethodName::SharpeEuc:
            m.selection = {SelectionKind::Sharpe, 0.0, params.risk_free};
            m.projection = {ProjectionKind::Euclidean};
            break;
        case MethodName::CaspBasic:
            m.selection = {SelectionKind::VolNorm};
            m.projection = {ProjectionKind::OmegaMetric};
            break;
        case MethodName::CaspRetSel:
            m.selection = {SelectionKind::ReturnBoosted, params.lambda};
            m.projection = {ProjectionKind::OmegaMetric, 0.0};
            break;
        case MethodName::RaCasp:
            m.selection = {SelectionKind::ReturnBoosted, params.lambda};
            m.projection = {ProjectionKind::ReturnRegularized, params.gamma};
            break;
    }
    return m;
}

std::string_view method_id(MethodName name) {
    switch (name) {
        case MethodName::Euclidean: return "euclidean";
        case MethodName::VolNormEuc: return "volnorm-euc";
        case MethodName::MinVarEuc: return "minvar-euc";
        case MethodName::SharpeEuc: return "sharpe-euc";
        case MethodName::CaspBasic: return "casp-basic";
        case MethodName::CaspRetSel: return "casp-retsel";
        case MethodName::RaCasp: return "ra-casp";
    }
    return "unknown";
}

MethodName parse_method(std::string_view id) {
    for (const auto m : kAllMethods) {
        if (method_id(m) == id) return m;
    }
    throw ArgumentError("unknown repair method '" + std::string(id) + "'");
}

const std::array<MethodName, 7>& all_methods() { return kAllMethods; }

Eigen::VectorXd normalized_returns(const Eigen::VectorXd& mu) {
    const double lo = mu.minCoeff();
    const double hi = mu.maxCoeff();
    if (!(hi > lo)) return Eigen::VectorXd::Constant(mu.size(), 0.5);
    return (mu.array() - lo) / (hi - lo);
}

Eigen::VectorXd selection_scores(const Eigen::Ref<const Eigen::VectorXd>& z, const MarketModel& model,
                                 const SelectionRule& rule) {
    if (static_cast<std::size_t>(z.size()) != model.size() || model.omega.rows() != z.size()) {
        throw ArgumentError("candidate length does not match the market model");
    }
    if (rule.lambda < 0.0) throw ArgumentError("return-awareness lambda must be non-negative");
    const Eigen::ArrayXd variance = model.omega.diagonal().array();
    const Eigen::ArrayXd sigma = variance.sqrt();
    const Eigen::ArrayXd magnitude = z.array().abs();
    switch (rule.kind) {
        case SelectionKind::Abs: return magnitude.matrix();
        case SelectionKind::VolNorm: return (magnitude / sigma).matrix();
        case SelectionKind::MinVar: return (magnitude / variance).matrix();
        case SelectionKind::Sharpe: return ((model.mu.array() - rule.risk_free) / sigma).matrix();
        case SelectionKind::ReturnBoosted: {
            const Eigen::ArrayXd boost = 1.0 + rule.lambda * normalized_returns(model.mu).array();
            return (magnitude * boost / sigma).matrix();
        }
    }
    throw ArgumentError("unknown selection rule");
}

std::vector<std::size_t> select_top_k(const Eigen::Ref<const Eigen::VectorXd>& scores, std::size_t k) {
    const auto n = static_cast<std::size_t>(scores.size());
    if (k > n) throw ArgumentError("cannot select " + std::to_string(k) + " of " + std::to_string(n) + " assets");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto key = [&scores](std::size_t i) {
        const double s = scores(static_cast<Eigen::Index>(i));
        return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&key](std::size_t a, std::size_t b) {
                          const double ka = key(a), kb = key(b);
                          return ka > kb || (ka == kb && a < b);
                      });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

RepairResult repair(const Eigen::Ref<const Eigen::VectorXd>& z, const MarketModel& model,
                    const ConstraintSet& constraints, const RepairMethod& method) {
    constraints.validate();
    if (!z.allFinite()) throw ArgumentError("candidate contains non-finite entries");
    const Eigen::VectorXd scores = selection_scores(z, model, method.selection);

    RepairResult out;
    out.degenerate_scores = (scores.array() == 0.0).all();
    out.portfolio.active = select_top_k(scores, constraints.k);
    const auto& active = out.portfolio.active;
    const Eigen::VectorXd z_s = gather(z, active);

    switch (method.projection.kind) {
        case ProjectionKind::Euclidean: {
            Eigen::VectorXd w = project_simplex_box(z_s, constraints.lower, constraints.upper);
            out.report.objective_value = 0.5 * (w - z_s).squaredNorm();
            out.report.kkt_residual = std::abs(w.sum() - 1.0);
            out.portfolio.weights = std::move(w);
            break;
        }
        case ProjectionKind::OmegaMetric:
        case ProjectionKind::ReturnRegularized: {
            const Eigen::MatrixXd omega_s = gather_block(model.omega, active);
            Eigen::VectorXd linear = Eigen::VectorXd::Zero(z_s.size());
            if (method.projection.kind == ProjectionKind::ReturnRegularized) {
                if (method.projection.gamma < 0.0) throw ArgumentError("return bias gamma must be non-negative");
                linear = method.projection.gamma * gather(normalized_returns(model.mu), active);
            }
            auto proj = project_omega(z_s, omega_s, constraints.lower, constraints.upper, linear);
            out.portfolio.weights = std::move(proj.weights);
            out.report = proj.report;
            break;
        }
    }
    return out;
}

std::vector<BatchItem> repair_batch(const std::vector<Eigen::VectorXd>& candidates, const MarketModel& model,
                                    const ConstraintSet& constraints, const RepairMethod& method,
                                    std::size_t threads) {
    std::vector<BatchItem> out(candidates.size());
    const auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                out[i].result = repair(candidates[i], model, constraints, method);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, candidates.size()));
    if (threads == 1) {
        work(0, candidates.size());
        return out;
    }
    // Contiguous chunks; each slot is written by exactly one thread.
    {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (candidates.size() + threads - 1) / threads;
        for (std::size_t begin = 0; begin < candidates.size(); begin += chunk) {
            pool.emplace_back(work, begin, std::min(candidates.size(), begin + chunk));
        }
    }
    return out;
}

}  // namespace casp
