#include "casp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "casp/error.hpp"

namespace casp {

namespace {

void check_dimension(const Portfolio& p, std::size_t n) {
    if (static_cast<std::size_t>(p.weights.size()) != p.active.size()) {
        throw ArgumentError("portfolio weight count differs from active index count");
    }
    for (const auto i : p.active) {
        if (i >= n) throw ArgumentError("portfolio index outside the asset universe");
    }
}

struct MinPoint {
    double x, y, z;
};

// Area dominated in the plane by points sorted by x ascending.
double area_2d(std::vector<MinPoint>& pts, double ref_x, double ref_y) {
    std::sort(pts.begin(), pts.end(), [](const MinPoint& a, const MinPoint& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    double area = 0.0;
    double best_y = ref_y;
    for (const auto& p : pts) {
        if (p.y < best_y) {
            area += (ref_x - p.x) * (best_y - p.y);
            best_y = p.y;
        }
    }
    return area;
}

}  // namespace

Objectives evaluate(const Portfolio& p, const MarketModel& model) {
    check_dimension(p, model.size());
    const Eigen::VectorXd w = p.dense(model.size());
    return Objectives{w.dot(model.omega * w), model.mu.dot(w), model.esg.dot(w)};
}

bool dominates(const Objectives& a, const Objectives& b) {
    const bool no_worse = a.variance <= b.variance && a.ret >= b.ret && a.esg >= b.esg;
    const bool better = a.variance < b.variance || a.ret > b.ret || a.esg > b.esg;
    return no_worse && better;
}

double sharpe_insample(const Portfolio& p, const MarketModel& model, double risk_free) {
    const auto obj = evaluate(p, model);
    if (!(obj.variance > 0.0)) throw UndefinedMetricError("Sharpe ratio undefined for a zero-variance portfolio");
    return (obj.ret - risk_free) / std::sqrt(obj.variance);
}

double sharpe_realized(const Portfolio& p, const ReturnPanel& panel, double risk_free, double annualization) {
    check_dimension(p, panel.num_assets());
    if (panel.returns.rows() < 2) throw InsufficientDataError("realized Sharpe needs at least 2 return observations");
    const Eigen::VectorXd daily = panel.returns * p.dense(panel.num_assets());
    const double mean = daily.mean();
    const double var = (daily.array() - mean).square().sum() / static_cast<double>(daily.size() - 1);
    const double spread = daily.maxCoeff() - daily.minCoeff();
    if (spread == 0.0 || !(var > 1e-30)) {
        throw UndefinedMetricError("realized Sharpe undefined: portfolio returns have zero variance");
    }
    return (annualization * mean - risk_free) / std::sqrt(annualization * var);
}

double tracking_error_sq(const Eigen::Ref<const Eigen::VectorXd>& w1, const Eigen::Ref<const Eigen::VectorXd>& w2,
                         const Eigen::Ref<const Eigen::MatrixXd>& omega) {
    if (w1.size() != w2.size() || omega.rows() != w1.size() || omega.cols() != w1.size()) {
        throw ArgumentError("tracking error inputs differ in dimension");
    }
    const Eigen::VectorXd d = w1 - w2;
    return d.dot(omega * d);
}

TurnoverCost turnover_cost(const Eigen::Ref<const Eigen::VectorXd>& w_old, const Eigen::Ref<const Eigen::VectorXd>& w_new,
                           double cost_rate_bps) {
    if (w_old.size() != w_new.size()) throw ArgumentError("turnover inputs differ in dimension");
    const double turnover = 0.5 * (w_new - w_old).cwiseAbs().sum();
    return TurnoverCost{turnover, turnover * cost_rate_bps};
}

TurnoverCost turnover_cost(const Portfolio& w_old, const Portfolio& w_new, double cost_rate_bps) {
    std::size_t n = 0;
    for (const auto i : w_old.active) n = std::max(n, i + 1);
    for (const auto i : w_new.active) n = std::max(n, i + 1);
    return turnover_cost(w_old.dense(n), w_new.dense(n), cost_rate_bps);
}

double net_sharpe_proxy(double gross_sharpe, double cost_bps, double sigma_annual, double rebalances_per_year) {
    if (!(sigma_annual > 0.0)) throw UndefinedMetricError("net Sharpe proxy needs positive volatility");
    return gross_sharpe - (cost_bps / 1e4) * rebalances_per_year / sigma_annual;
}

HypervolumeResult hypervolume(const std::vector<Objectives>& front, const Objectives& reference) {
    const MinPoint ref{reference.variance, -reference.ret, -reference.esg};
    HypervolumeResult out;
    std::vector<MinPoint> pts;
    for (const auto& o : front) {
        const MinPoint p{o.variance, -o.ret, -o.esg};
        if (p.x < ref.x && p.y < ref.y && p.z < ref.z) pts.push_back(p);
        else ++out.excluded;
    }
    std::sort(pts.begin(), pts.end(), [](const MinPoint& a, const MinPoint& b) { return a.z < b.z; });
    std::vector<MinPoint> slab;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        slab.push_back(pts[i]);
        const double next_z = i + 1 < pts.size() ? pts[i + 1].z : ref.z;
        const double height = next_z - pts[i].z;
        if (height > 0.0) out.value += area_2d(slab, ref.x, ref.y) * height;
    }
    return out;
}

Objectives hypervolume_reference(const std::vector<std::vector<Objectives>>& fronts, double offset) {
    bool any = false;
    Objectives worst, best;
    for (const auto& front : fronts) {
        for (const auto& o : front) {
            if (!any) {
                worst = best = o;
                any = true;
                continue;
            }
            worst.variance = std::max(worst.variance, o.variance);
            worst.ret = std::min(worst.ret, o.ret);
            worst.esg = std::min(worst.esg, o.esg);
            best.variance = std::min(best.variance, o.variance);
            best.ret = std::max(best.ret, o.ret);
            best.esg = std::max(best.esg, o.esg);
        }
    }
    if (!any) throw ArgumentError("hypervolume reference needs at least one point");
    const auto pad = [offset](double nadir, double range) {
        return range > 0.0 ? offset * range : offset * std::max(std::abs(nadir), 1e-6);
    };
    return Objectives{worst.variance + pad(worst.variance, worst.variance - best.variance),
                      worst.ret - pad(worst.ret, best.ret - worst.ret),
                      worst.esg - pad(worst.esg, best.esg - worst.esg)};
}

std::vector<double> mid_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, WilcoxonMode mode) {
    if (a.size() != b.size()) throw ArgumentError("Wilcoxon test needs paired samples of equal length");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (!std::isfinite(d)) throw ArgumentError("Wilcoxon test input contains non-finite values");
        if (d != 0.0) diffs.push_back(d);
    }
    const std::size_t n = diffs.size();
    if (n < 5) {
        throw InsufficientDataError("Wilcoxon test needs at least 5 nonzero differences, got " + std::to_string(n));
    }
    std::vector<double> magnitudes(n);
    std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::abs(d); });
    const auto ranks = mid_ranks(magnitudes);

    double w_plus = 0.0, w_minus = 0.0;
    for (std::size_t i = 0; i < n; ++i) (diffs[i] > 0.0 ? w_plus : w_minus) += ranks[i];

    TestResult out;
    out.statistic = w_plus - w_minus;
    out.n_effective = n;
    const bool exact = mode == WilcoxonMode::Exact || (mode == WilcoxonMode::Auto && n <= 25);
    out.exact = exact;
    if (exact) {
        // Mid-ranks are multiples of 1/2, so doubled ranks are integers and the
        // null distribution of 2*W+ is a subset-sum count over them.
        std::vector<std::size_t> doubled(n);
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
            total += doubled[i];
        }
        std::vector<double> count(total + 1, 0.0);
        count[0] = 1.0;
        for (const auto r : doubled) {
            for (std::size_t s = total; s >= r; --s) {
                count[s] += count[s - r];
                if (s == r) break;
            }
        }
        const auto observed = static_cast<std::size_t>(std::llround(2.0 * w_plus));
        const double all = std::ldexp(1.0, static_cast<int>(n));
        double lower = 0.0, upper = 0.0;
        for (std::size_t s = 0; s <= total; ++s) {
            if (s <= observed) lower += count[s];
            if (s >= observed) upper += count[s];
        }
        out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    } else {
        const double nd = static_cast<double>(n);
        double tie_term = 0.0;
        std::vector<double> sorted = ranks;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
        const double mean = nd * (nd + 1.0) / 4.0;
        const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
        if (!(var > 0.0)) {
            out.p_value = 1.0;
        } else {
            const double zscore = std::max(0.0, std::abs(w_plus - mean) - 0.5) / std::sqrt(var);
            out.p_value = std::min(1.0, std::erfc(zscore / std::sqrt(2.0)));
        }
    }
    return out;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("Spearman correlation needs samples of equal length");
    if (a.size() < 3) throw InsufficientDataError("Spearman correlation needs at least 3 pairs");
    const auto ra = mid_ranks(a);
    const auto rb = mid_ranks(b);
    const Eigen::Map<const Eigen::VectorXd> x(ra.data(), static_cast<Eigen::Index>(ra.size()));
    const Eigen::Map<const Eigen::VectorXd> y(rb.data(), static_cast<Eigen::Index>(rb.size()));
    const Eigen::VectorXd xc = x.array() - x.mean();
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double sxx = xc.squaredNorm(), syy = yc.squaredNorm();
    if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("Spearman correlation undefined for constant input");
    return std::clamp(xc.dot(yc) / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace casp
