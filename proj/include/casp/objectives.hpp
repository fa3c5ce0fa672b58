#pragma once

#include "casp/market_data.hpp"
#include "casp/projection.hpp"

namespace casp {

/// The three portfolio objectives: variance w'Omega w (minimized), expected
/// return mu'w and ESG score e'w (both maximized).
struct Objectives {
    double variance = 0.0;
    double ret = 0.0;
    double esg = 0.0;

    bool operator==(const Objectives&) const = default;
};

Objectives evaluate(const Portfolio& p, const MarketModel& model);

/// No worse in every objective and strictly better in at least one.
bool dominates(const Objectives& a, const Objectives& b);

}  // namespace casp
