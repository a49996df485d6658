#pragma once

// End-to-end pricing: builds the grid and the period matrices from a product
// and a model, composes them, and evaluates prices, greeks, terminal
// densities and gap-risk indicators.

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cppim/grid.hpp"
#include "cppim/kernel.hpp"
#include "cppim/operators.hpp"
#include "cppim/process.hpp"
#include "cppim/product.hpp"

namespace cppim {

struct ProcessModel {
    enum class Kind { BlackScholes, Kou };
    Kind kind = Kind::BlackScholes;
    double sigma = 0.2; // BS volatility (flat unless a schedule is given)
    std::vector<std::pair<Date, double>> vol_schedule;
    KouParams jumps; // Kou parameters (jumps.sigma is the diffusive vol)

    static ProcessModel black_scholes(double s) {
        ProcessModel m;
        m.kind = Kind::BlackScholes;
        m.sigma = s;
        return m;
    }
    static ProcessModel kou(const KouParams& p) {
        ProcessModel m;
        m.kind = Kind::Kou;
        m.jumps = p;
        m.sigma = p.sigma;
        return m;
    }

    void validate() const {
        if (kind == Kind::Kou)
            jumps.validate();
        else if (vol_schedule.empty() && !(sigma > 0.0))
            throw std::invalid_argument("model: sigma must be > 0");
    }

    double diffusive_vol(Date t) const {
        if (kind == Kind::Kou) return jumps.sigma;
        double v = sigma;
        for (const auto& [d, s] : vol_schedule)
            if (d <= t) v = s;
        return v;
    }

    // annualized variance of ln R, including jump contributions
    double total_variance_rate(Date t) const {
        double s = diffusive_vol(t);
        if (kind == Kind::Kou) {
            KouParams p = jumps;
            p.sigma = s;
            return p.total_variance_rate();
        }
        return s * s;
    }

    ProcessModel bumped(double dsigma) const {
        ProcessModel m = *this;
        m.sigma += dsigma;
        for (auto& [d, s] : m.vol_schedule) s += dsigma;
        m.jumps.sigma += dsigma;
        return m;
    }
};

enum class PayoffKind { Strategy, GuaranteedStrategy, Call, Put, DigitalPut };

struct PayoffSpec {
    PayoffKind kind = PayoffKind::Put;
    double strike = 1.0; // fraction of the final guarantee, or currency
    bool monetary = false;

    double operator()(double x) const {
        switch (kind) {
        case PayoffKind::Strategy: return x;
        case PayoffKind::GuaranteedStrategy: return std::max(x, 1.0);
        case PayoffKind::Call: return std::max(x - strike, 0.0);
        case PayoffKind::Put: return std::max(strike - x, 0.0);
        case PayoffKind::DigitalPut: return (x <= strike) ? 1.0 : 0.0;
        }
        return 0.0;
    }
};

struct ValuationState {
    std::optional<Date> date;        // defaults to the product start
    std::optional<double> x_state;   // X at the last rebalancing date
    double spot = 0.0, spot_fixing = 0.0; // risky spot now / at the last fixing
};

struct EngineConfig {
    std::size_t grid_size = 500;
    double grid_eps = 1e-20;
    double bucket_tolerance = 0.0;
    Strategy strategy = Strategy::Auto;
    int n_fft = 1 << 14;
    double fft_width_sd = 12.0;
    double spot_bump = 1e-4;  // relative, central differences
    double vega_bump = 0.001; // absolute vol bump, central differences
    int y_points = 5;         // conditional-rebalancing Y grid
    bool want_greeks = true;
    bool want_density = true;
};

struct PricingReport {
    double price = 0.0;
    double delta = 0.0, gamma = 0.0, vega = 0.0;
    double gap_proportion = 0.0;
    double conditional_loss = 0.0; // E[1 - X | X < 1], fraction of guarantee
    double expected_loss = 0.0;    // gap_proportion * conditional_loss
    std::vector<double> terminal_density;
    double x0 = 0.0;
    double guarantee = 0.0;
    double discount = 1.0;
    double row_sum_error = 0.0;
    double min_entry = 0.0;
    double build_seconds = 0.0, solve_seconds = 0.0;
    bool second_moment_warning = false;
};

// Product, model and valuation state resolved into grid + period chain.
struct PreparedPricing {
    ProductSpec spec;
    RateCurve curve;
    ProcessModel model;
    EngineConfig cfg;

    std::vector<Date> dates;
    std::size_t current_period = 0; // period containing the valuation date
    Date valuation;
    bool started = true;     // valuation at/after the first fixing
    double spot_ratio = 1.0; // F_t / F_fixing
    double x_state = 1.5;    // X at the last rebalancing
    double discount_to_maturity = 1.0;

    std::shared_ptr<const StateGrid> grid;
    std::vector<PeriodParams> periods; // current (possibly partial) first
    CompositionPlan plan;
    std::vector<ReturnLaw> laws;             // one per bucket
    std::vector<TransitionMatrix> matrices;  // one per bucket
    double fixed_coupon_pv = 0.0;            // PV of fixed coupons (paid to the investor)

    // threshold values and guarantee-discount factors at rebalancing dates
    std::vector<double> threshold_values;    // H(t_i) for the running guarantee
    std::vector<double> acc_to_maturity;     // e^{-int_{t_i}^T (r + s_H)} = H_i / G

    const StateGrid& g() const { return *grid; }
};

namespace detail {

inline ReturnLaw make_law(const ProcessModel& model, double variance, double tau, Date at,
                          const EngineConfig& cfg) {
    if (model.kind == ProcessModel::Kind::Kou) {
        KouParams p = model.jumps;
        double jump_var = p.total_variance_rate() - p.sigma * p.sigma;
        double diff_var = std::max(variance / tau - jump_var, 1e-12);
        p.sigma = std::sqrt(diff_var);
        return kou_tabulate_law(p, tau, cfg.n_fft, cfg.fft_width_sd);
    }
    (void)at;
    return ReturnLaw::black_scholes(std::sqrt(std::max(variance / tau, 1e-12)), tau);
}

} // namespace detail

inline PreparedPricing prepare_pricing(const ProductSpec& spec, const RateCurve& curve,
                                       const ProcessModel& model, const EngineConfig& cfg,
                                       const ValuationState& state = {}) {
    spec.validate();
    model.validate();

    PreparedPricing pp;
    pp.spec = spec;
    pp.curve = curve;
    pp.model = model;
    pp.cfg = cfg;
    pp.dates = spec.schedule();
    const auto& d = pp.dates;
    const std::size_t n = d.size() - 1;

    pp.valuation = state.date.value_or(spec.start);
    if (pp.valuation >= spec.maturity)
        throw std::invalid_argument("pricing: valuation date at or after maturity");
    pp.started = pp.valuation >= spec.start;

    pp.current_period = 0;
    if (pp.started)
        while (pp.current_period + 1 < n && d[pp.current_period + 1] <= pp.valuation) ++pp.current_period;

    pp.x_state = state.x_state.value_or(spec.nominal / spec.threshold_value(spec.start, curve));

    if (pp.started && state.spot > 0.0 && state.spot_fixing > 0.0) {
        // F_t / F_fixing with forwards to the product maturity:
        // (S_t / S_fix) e^{-int_{fix}^{t} r}
        Date fix = d[pp.current_period];
        pp.spot_ratio = (state.spot / state.spot_fixing) * curve.discount(fix, pp.valuation);
    }
    pp.discount_to_maturity = curve.discount(pp.valuation, spec.maturity);

    // grid sized from the valuation-date state
    GridSpec gs;
    gs.n_points = cfg.grid_size;
    gs.eps = cfg.grid_eps;
    gs.x0 = std::max(pp.x_state, 1.01);
    gs.w_max = spec.exposure.w_max();
    gs.sigma_atm = std::sqrt(model.total_variance_rate(spec.start));
    gs.horizon = std::max(year_fraction(pp.valuation, spec.maturity), 0.1);
    gs.cushion_limit = spec.exposure.cushion_limit;
    pp.grid = std::make_shared<StateGrid>(build_grid(gs));

    // per-period terms from the current period onward
    pp.threshold_values.resize(n + 1);
    pp.acc_to_maturity.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        pp.threshold_values[i] = spec.threshold_value(d[i], curve);
        pp.acc_to_maturity[i] = pp.threshold_values[i] / spec.guarantee;
    }

    for (std::size_t i = pp.current_period; i < n; ++i) {
        PeriodParams p;
        Date a = d[i], b = d[i + 1];
        double tau_full = year_fraction(a, b);
        p.terms.tau = tau_full;
        p.terms.zc = curve.discount(a, b);
        p.terms.e_msH = (pp.threshold_values[i] / pp.threshold_values[i + 1]) / p.terms.zc;
        p.terms.e_sp = std::exp(spec.spread_plus * tau_full);
        p.terms.e_sm = std::exp(spec.spread_minus * tau_full);
        p.terms.fee_prop = spec.fees.proportional * tau_full;
        p.terms.fee_def = spec.fees.defeasance * tau_full;
        p.terms.fee_risky = spec.fees.risky * tau_full;
        p.terms.fee_fixed_over_h = spec.fees.fixed * tau_full / pp.threshold_values[i];
        double law_tau = tau_full;
        if (i == pp.current_period && pp.started && pp.valuation > a) {
            law_tau = year_fraction(pp.valuation, b); // partial running period
            p.terms.spot_ratio = pp.spot_ratio;
        }
        p.variance = model.total_variance_rate(a) * law_tau;
        // fixed coupons: amounts deducted at the start of the period that
        // follows each coupon date, paid out to the investor
        if (spec.coupons && spec.coupons->kind == CouponSchedule::Kind::Fixed &&
            spec.coupons->fixed_amount != 0.0 && i > 0 &&
            i % std::size_t(spec.coupons->every_n_periods) == 0) {
            p.terms.fee_fixed_over_h += spec.coupons->fixed_amount / pp.threshold_values[i];
        }
        pp.periods.push_back(p);
    }
    if (spec.coupons && spec.coupons->kind == CouponSchedule::Kind::Fixed) {
        for (std::size_t i = pp.current_period + 1; i < n; ++i)
            if (i % std::size_t(spec.coupons->every_n_periods) == 0 && d[i] > pp.valuation)
                pp.fixed_coupon_pv += spec.coupons->fixed_amount * curve.discount(pp.valuation, d[i]);
    }
    if (pp.periods.empty()) throw std::invalid_argument("pricing: no remaining periods");

    // a partial running period always gets its own bucket; the remaining
    // full periods are bucketed by the tolerance
    const bool partial_first = pp.started && pp.valuation > d[pp.current_period];
    if (partial_first) {
        std::vector<PeriodParams> rest(pp.periods.begin() + 1, pp.periods.end());
        pp.plan = plan_buckets(rest, cfg.bucket_tolerance);
        for (auto& bkt : pp.plan.buckets) bkt.first += 1;
        Bucket head;
        head.terms = pp.periods[0].terms;
        head.variance = pp.periods[0].variance;
        head.count = 1;
        head.first = 0;
        pp.plan.buckets.insert(pp.plan.buckets.begin(), head);
    } else {
        pp.plan = plan_buckets(pp.periods, cfg.bucket_tolerance);
    }

    pp.laws.reserve(pp.plan.buckets.size());
    pp.matrices.reserve(pp.plan.buckets.size());
    for (const auto& bucket : pp.plan.buckets) {
        double law_tau = bucket.terms.tau;
        if (bucket.first == 0 && pp.started && pp.valuation > d[pp.current_period])
            law_tau = year_fraction(pp.valuation, d[pp.current_period + 1]);
        pp.laws.push_back(
            detail::make_law(model, bucket.variance, law_tau, d[pp.current_period + bucket.first], cfg));
        pp.matrices.push_back(
            build_period_matrix(pp.grid, pp.laws.back(), spec.exposure, bucket.terms));
    }
    return pp;
}

namespace detail {

inline std::vector<KernelRun> runs_of(const PreparedPricing& pp) {
    std::vector<KernelRun> runs;
    for (std::size_t b = 0; b < pp.plan.buckets.size(); ++b)
        runs.push_back({&pp.matrices[b].m, pp.plan.buckets[b].count});
    return runs;
}

} // namespace detail

// Plain pricing path (no coupons, lock-in or American exercise).
inline PricingReport price_plain(const PreparedPricing& pp, const PayoffSpec& payoff) {
    auto t_start = std::chrono::steady_clock::now();
    const StateGrid& grid = pp.g();
    const auto& g = grid.points();
    const Eigen::Index n = Eigen::Index(g.size());

    PayoffSpec main = payoff;
    if (payoff.monetary) {
        // without lock-in the final guarantee is the contractual guarantee
        main.strike = payoff.strike / pp.spec.guarantee;
        main.monetary = false;
    }

    // columns: main payoff, digital at 1, loss (1-x)+, strategy value
    Matrix block(n, 4);
    for (Eigen::Index l = 0; l < n; ++l) {
        block(l, 0) = main(g[l]);
        block(l, 1) = (g[l] <= 1.0) ? 1.0 : 0.0;
        block(l, 2) = std::max(1.0 - g[l], 0.0);
        block(l, 3) = g[l];
    }

    auto runs = detail::runs_of(pp);
    Matrix values = apply_chain(runs, block, pp.cfg.strategy);

    PricingReport rep;
    rep.x0 = pp.x_state;
    rep.guarantee = pp.spec.guarantee;
    rep.discount = pp.discount_to_maturity;

    auto column = [&](Eigen::Index c) {
        std::vector<double> v(g.size());
        for (Eigen::Index l = 0; l < n; ++l) v[std::size_t(l)] = values(l, c);
        return v;
    };
    auto vmain = column(0), vdig = column(1), vloss = column(2);

    rep.price = rep.discount * pp.spec.guarantee * grid.interpolate(vmain, rep.x0);
    if (payoff.kind == PayoffKind::Strategy || payoff.kind == PayoffKind::GuaranteedStrategy)
        rep.price += pp.fixed_coupon_pv; // coupons received alongside the strategy
    rep.gap_proportion = grid.interpolate(vdig, rep.x0);
    rep.expected_loss = grid.interpolate(vloss, rep.x0);
    rep.conditional_loss = (rep.gap_proportion > 0.0) ? rep.expected_loss / rep.gap_proportion : 0.0;

    for (const auto& tm : pp.matrices) {
        rep.row_sum_error = std::max(rep.row_sum_error, tm.row_sum_error());
        rep.min_entry = std::min(rep.min_entry, tm.min_entry());
        rep.second_moment_warning |= tm.second_moment_warning;
    }

    if (pp.cfg.want_density) {
        Eigen::RowVectorXd start = Eigen::RowVectorXd::Zero(n);
        auto sp = grid.split(rep.x0);
        start(Eigen::Index(sp.i)) = 1.0 - sp.w_upper;
        start(Eigen::Index(sp.i) + 1) = sp.w_upper;
        Eigen::RowVectorXd density = propagate_density(runs, start);
        rep.terminal_density.assign(density.data(), density.data() + n);
    }

    auto t_mid = std::chrono::steady_clock::now();

    if (pp.cfg.want_greeks) {
        if (!pp.started) {
            rep.delta = rep.gamma = 0.0; // no sensitivity before the strategy starts
        } else {
            // only the first matrix depends on the risky spot: rebuild it
            // under bumped F_t, reusing the propagated tail values
            Matrix tail = block;
            {
                std::vector<KernelRun> tail_runs(runs.begin(), runs.end());
                tail_runs[0].count -= 1;
                if (tail_runs[0].count == 0) tail_runs.erase(tail_runs.begin());
                tail = apply_chain(tail_runs, block, pp.cfg.strategy);
            }
            const double h = pp.cfg.spot_bump;
            auto price_with_ratio = [&](double ratio_scale) {
                KernelTerms t = pp.plan.buckets[0].terms;
                t.spot_ratio *= ratio_scale;
                TransitionMatrix m0 = build_period_matrix(pp.grid, pp.laws[0], pp.spec.exposure, t);
                Vector v = m0.m * tail.col(0);
                std::vector<double> vv(v.data(), v.data() + n);
                return rep.discount * pp.spec.guarantee * grid.interpolate(vv, rep.x0);
            };
            double p_up = price_with_ratio(1.0 + h);
            double p_dn = price_with_ratio(1.0 - h);
            // derivatives w.r.t. a relative spot move; price_report rescales
            // to absolute spot units when spots are supplied
            rep.delta = (p_up - p_dn) / (2.0 * h);
            rep.gamma = (p_up - 2.0 * rep.price + p_dn) / (h * h);
        }
    }
    auto t_end = std::chrono::steady_clock::now();
    rep.build_seconds = std::chrono::duration<double>(t_mid - t_start).count();
    rep.solve_seconds = std::chrono::duration<double>(t_end - t_mid).count();
    return rep;
}

// Full report: price + greeks with vega by central reprice under bumped vol.
inline PricingReport price_report(const ProductSpec& spec, const RateCurve& curve,
                                  const ProcessModel& model, const PayoffSpec& payoff,
                                  const EngineConfig& cfg, const ValuationState& state = {}) {
    PreparedPricing pp = prepare_pricing(spec, curve, model, cfg, state);
    PricingReport rep = price_plain(pp, payoff);

    // scale spot sensitivities to absolute spot units when spots are given
    if (cfg.want_greeks && state.spot > 0.0) {
        rep.delta /= state.spot;
        rep.gamma /= state.spot * state.spot;
    }

    if (cfg.want_greeks) {
        EngineConfig light = cfg;
        light.want_greeks = false;
        light.want_density = false;
        double b = cfg.vega_bump;
        PreparedPricing up = prepare_pricing(spec, curve, model.bumped(b), light, state);
        PreparedPricing dn = prepare_pricing(spec, curve, model.bumped(-b), light, state);
        double p_up = price_plain(up, payoff).price;
        double p_dn = price_plain(dn, payoff).price;
        rep.vega = (p_up - p_dn) / (2.0 * b) * 0.01; // per volatility point
    }
    return rep;
}

} // namespace cppim
