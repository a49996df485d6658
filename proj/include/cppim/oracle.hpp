#pragma once

// Closed formulas for the time-homogeneous vanilla CPPI (equal periods, no
// spreads, fees, coupons or lock-ins): local shortfall probability, gap
// proportion, put on the guarantee, and the mid-period variant. Model-free
// given the P1/P2 queries of the return law; used as an independent check of
// the operator engine.

#include <cmath>
#include <stdexcept>

#include "cppim/process.hpp"

namespace cppim::closed_form {

// P[F1/F0 <= (m-1)/m], the per-period probability of breaching the floor.
inline double local_shortfall(const ReturnLaw& law, double multiplier) {
    if (multiplier <= 1.0) return 0.0;
    return law.p1((multiplier - 1.0) / multiplier);
}

struct VanillaSpec {
    double multiplier = 4.0;
    int n_periods = 520;
    double x0 = 1.5;       // initial rescaled value C0/H0
    double guarantee = 1.0;

    void validate() const {
        if (!(multiplier > 0.0)) throw std::invalid_argument("vanilla: multiplier must be > 0");
        if (n_periods < 1) throw std::invalid_argument("vanilla: need at least one period");
        if (!(guarantee > 0.0)) throw std::invalid_argument("vanilla: guarantee must be > 0");
    }
};

// survival factor A = 1 - B, B = E[(m R - m + 1) 1_{R <= (m-1)/m}]
inline double survival_factor(const ReturnLaw& law, double m) {
    if (m <= 1.0) return 1.0;
    double K = (m - 1.0) / m;
    double B = m * law.p2(K) + (1.0 - m) * law.p1(K);
    return 1.0 - B;
}

inline double gap_proportion(const ReturnLaw& law, double m, int n) {
    return 1.0 - std::pow(1.0 - local_shortfall(law, m), n);
}

// Undiscounted put struck at the guarantee, valued at a rebalancing date.
inline double vanilla_put(const VanillaSpec& spec, const ReturnLaw& law) {
    spec.validate();
    if (spec.x0 <= 1.0) return spec.guarantee * (1.0 - spec.x0); // already defeased
    double a = survival_factor(law, spec.multiplier);
    return spec.guarantee * (spec.x0 - 1.0) * (std::pow(a, spec.n_periods) - 1.0);
}

// Undiscounted put inside the first period: `law_rest` is the full-period
// law entering A, `law_now` covers the remaining fraction of the running
// period, and spot_ratio = F_t/F_0 relates the forward to its start fixing.
inline double vanilla_put_midperiod(const VanillaSpec& spec, const ReturnLaw& law_rest,
                                    const ReturnLaw& law_now, double spot_ratio) {
    spec.validate();
    if (spec.x0 <= 1.0) return spec.guarantee * (1.0 - spec.x0);
    if (!(spot_ratio > 0.0)) throw std::invalid_argument("vanilla: spot ratio must be > 0");
    double m = spec.multiplier;
    double w0 = m * (spec.x0 - 1.0) / spec.x0;
    double K = (m - 1.0) / m / spot_ratio;
    double p1 = law_now.p1(K), p2 = law_now.p2(K);
    double ex1_below = w0 * spec.x0 * spot_ratio * p2 + (1.0 - w0) * spec.x0 * p1;
    double ex1 = w0 * spec.x0 * spot_ratio + (1.0 - w0) * spec.x0;
    double a_rest = std::pow(survival_factor(law_rest, m), spec.n_periods - 1);
    double below = p1 - ex1_below;
    double above = (1.0 - p1) - (ex1 - ex1_below);
    return spec.guarantee * (below + above * (1.0 - a_rest));
}

inline double gap_proportion_midperiod(const VanillaSpec& spec, const ReturnLaw& law_rest,
                                       const ReturnLaw& law_now, double spot_ratio) {
    double m = spec.multiplier;
    if (m <= 1.0) return 0.0;
    double K = (m - 1.0) / m / spot_ratio;
    double survive_rest = std::pow(1.0 - local_shortfall(law_rest, m), spec.n_periods - 1);
    return 1.0 - (1.0 - law_now.p1(K)) * survive_rest;
}

} // namespace cppim::closed_form
