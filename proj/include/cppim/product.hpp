#pragma once

// Contract and market-data descriptions: exposure rules, fees, coupons,
// lock-ins, threshold definitions, rate curves, rebalancing schedules.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cppim/date.hpp"

namespace cppim {

struct ExposureRule {
    double multiplier = 4.0;
    std::optional<double> max_exposure;
    std::optional<double> min_exposure;
    std::optional<double> cushion_limit; // cushion fraction below which w = 0

    void validate() const {
        if (!(multiplier > 0.0)) throw std::invalid_argument("exposure: multiplier must be > 0");
        if (min_exposure && *min_exposure < 0.0)
            throw std::invalid_argument("exposure: min_exposure must be >= 0");
        if (min_exposure && max_exposure && *min_exposure > *max_exposure)
            throw std::invalid_argument("exposure: min_exposure above max_exposure");
        if (cushion_limit && !(*cushion_limit >= 0.0 && *cushion_limit < 1.0))
            throw std::invalid_argument("exposure: cushion_limit must be in [0, 1)");
    }

    // Risky weighting as a function of the rescaled value x = C/H. The
    // cushion limit overrides the exposure floor.
    double weight(double x) const {
        if (cushion_limit && *cushion_limit > 0.0) {
            double cushion = (x > 0.0) ? (x - 1.0) / x : -1.0;
            if (cushion < *cushion_limit) return 0.0;
        }
        double base = (x > 0.0) ? multiplier * std::max(0.0, (x - 1.0) / x) : 0.0;
        if (min_exposure) base = std::max(base, *min_exposure);
        if (max_exposure) base = std::min(base, *max_exposure);
        return base;
    }

    double w_max() const { return max_exposure ? std::min(*max_exposure, multiplier) : multiplier; }
};

inline double exposure(double x, const ExposureRule& rule) { return rule.weight(x); }

struct Fees {
    double proportional = 0.0; // f_p, rate per year on C_i
    double defeasance = 0.0;   // f_d, replaces f_p when fully monetized
    double risky = 0.0;        // f_r, rate per year on the risky investment
    double fixed = 0.0;        // f_f, currency amount per year

    bool any() const { return proportional != 0.0 || defeasance != 0.0 || risky != 0.0 || fixed != 0.0; }
};

struct CouponSchedule {
    enum class Kind { Fixed, Performance };
    Kind kind = Kind::Performance;
    double q = 0.0;            // participation fraction, Performance only
    double fixed_amount = 0.0; // currency per coupon, Fixed only
    int every_n_periods = 52;  // coupon dates as a subset of rebalancing dates

    void validate() const {
        if (kind == Kind::Performance && !(q >= 0.0 && q < 1.0))
            throw std::invalid_argument("coupons: q must be in [0, 1)");
        if (every_n_periods < 1) throw std::invalid_argument("coupons: bad frequency");
    }
};

struct LockInRule {
    enum class Kind { Periodic, Continuous };
    Kind kind = Kind::Periodic;
    double proportion = 0.0;  // p
    int every_n_periods = 52; // Periodic only

    void validate() const {
        if (!(proportion >= 0.0 && proportion <= 1.0))
            throw std::invalid_argument("lock-in: proportion must be in [0, 1]");
        if (kind == Kind::Periodic && every_n_periods < 1)
            throw std::invalid_argument("lock-in: bad frequency");
    }
};

// Threshold definition. H is deterministic with H(T) = guarantee.
//  - natural: H grows at r + spread (spread = 0 gives the discounted guarantee)
//  - linear: H linear in time from initial_fraction * nominal to the guarantee
//  - flat: H equals the guarantee (open-ended products, equivalent to s_H = -r)
struct ThresholdDef {
    enum class Kind { Natural, Linear, Flat };
    Kind kind = Kind::Natural;
    double spread = 0.0;           // s_H, continuous, Natural only
    double initial_fraction = 0.6; // Linear only, H(t0) as share of nominal
};

// Continuously compounded discounting; either a flat rate or log-linear
// interpolation on zero-coupon pillars.
class RateCurve {
public:
    static RateCurve flat(double r) {
        RateCurve c;
        c.flat_rate_ = r;
        return c;
    }

    static RateCurve pillars(Date anchor, std::vector<std::pair<Date, double>> zero_rates) {
        if (zero_rates.empty()) throw std::invalid_argument("curve: no pillars");
        RateCurve c;
        c.anchor_ = anchor;
        for (auto& [d, r] : zero_rates) {
            if (d <= anchor) throw std::invalid_argument("curve: pillar not after anchor");
            if (!c.pillar_days_.empty() && d.serial() - anchor.serial() <= c.pillar_days_.back())
                throw std::invalid_argument("curve: pillars not increasing");
            double t = year_fraction(anchor, d);
            c.pillar_days_.push_back(double(d - anchor));
            c.log_zc_.push_back(-r * t);
        }
        return c;
    }

    // ZC(a, b) = exp(-int_a^b r dt)
    double discount(Date a, Date b) const {
        if (b < a) return 1.0 / discount(b, a);
        if (flat_rate_) return std::exp(-*flat_rate_ * year_fraction(a, b));
        return std::exp(log_zc_at(b) - log_zc_at(a));
    }

    double zero_rate(Date a, Date b) const {
        double t = year_fraction(a, b);
        if (t <= 0.0) return 0.0;
        return -std::log(discount(a, b)) / t;
    }

private:
    double log_zc_at(Date d) const {
        double x = double(d - anchor_);
        const auto& px = pillar_days_;
        if (x <= 0.0) return 0.0;
        if (x <= px.front()) return log_zc_.front() * x / px.front();
        if (x >= px.back()) {
            // flat forward extrapolation
            std::size_t n = px.size();
            if (n == 1) return log_zc_.back() * x / px.back();
            double slope = (log_zc_[n - 1] - log_zc_[n - 2]) / (px[n - 1] - px[n - 2]);
            return log_zc_.back() + slope * (x - px.back());
        }
        auto it = std::lower_bound(px.begin(), px.end(), x);
        std::size_t i = std::size_t(it - px.begin());
        double w = (x - px[i - 1]) / (px[i] - px[i - 1]);
        return log_zc_[i - 1] * (1.0 - w) + log_zc_[i] * w;
    }

    std::optional<double> flat_rate_;
    Date anchor_;
    std::vector<double> pillar_days_;
    std::vector<double> log_zc_;
};

struct ProductSpec {
    Date start;
    Date maturity;
    int period_days = 7;
    double nominal = 1.0;
    double guarantee = 1.0; // amount promised at maturity

    ExposureRule exposure;
    double spread_plus = 0.0;  // risk-free asset spread
    double spread_minus = 0.0; // financing spread when weighting > 1
    ThresholdDef threshold;
    Fees fees;
    std::optional<CouponSchedule> coupons;
    std::optional<LockInRule> lockin;
    bool open_ended = false; // american exercise with continuous lock-in

    void validate() const {
        if (!(maturity > start)) throw std::invalid_argument("product: maturity must be after start");
        if (period_days < 1) throw std::invalid_argument("product: bad rebalancing period");
        if (!(nominal > 0.0) || !(guarantee > 0.0))
            throw std::invalid_argument("product: nominal and guarantee must be > 0");
        exposure.validate();
        if (coupons) coupons->validate();
        if (lockin) lockin->validate();
        if (open_ended && (!lockin || lockin->kind != LockInRule::Kind::Continuous))
            throw std::invalid_argument("product: open-ended requires a continuous lock-in");
        if (open_ended && threshold.kind != ThresholdDef::Kind::Flat)
            throw std::invalid_argument("product: open-ended requires a flat threshold");
    }

    // Rebalancing dates t_0 < ... < t_n = maturity.
    std::vector<Date> schedule() const {
        std::vector<Date> d;
        for (Date t = start; t < maturity; t = t + period_days) d.push_back(t);
        d.push_back(maturity);
        return d;
    }

    // Threshold value at a schedule date, for a unit of current guarantee.
    double threshold_value(Date t, const RateCurve& curve) const {
        switch (threshold.kind) {
        case ThresholdDef::Kind::Natural:
            return guarantee * curve.discount(t, maturity) *
                   std::exp(-threshold.spread * year_fraction(t, maturity));
        case ThresholdDef::Kind::Linear: {
            double u = double(t - start) / double(maturity - start);
            return threshold.initial_fraction * nominal * (1.0 - u) + guarantee * u;
        }
        case ThresholdDef::Kind::Flat:
            return guarantee;
        }
        return guarantee;
    }
};

} // namespace cppim
