#pragma once

// Structured features on top of the kernel machinery: performance coupons
// (semi-direct value streams), profit lock-in (dual kernels, absolute-strike
// backward recursion), conditional rebalancing (2-d state) and open-ended
// American exercise.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cppim/operators.hpp"
#include "cppim/pricing.hpp"

namespace cppim {

namespace detail {

// Remaps each row's destination mass through z -> z / f(x, z), optionally
// weighting the moved mass by f (the guarantee growth factor). Re-binning is
// the linear split, preserving mass and first moment of each atom.
template <class FactorFn>
Matrix remap_destinations(const Matrix& base, const StateGrid& grid, FactorFn&& factor,
                          bool weight_by_factor) {
    const auto& g = grid.points();
    const Eigen::Index n = base.rows();
    Matrix out = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index l = 0; l < n; ++l) {
            double mu = base(k, l);
            if (mu == 0.0) continue;
            double f = factor(g[k], g[l]);
            if (f == 1.0) {
                out(k, l) += mu;
                continue;
            }
            double z = g[l] / f;
            if (weight_by_factor) mu *= f;
            auto sp = grid.split(z);
            out(k, sp.i) += mu * (1.0 - sp.w_upper);
            out(k, sp.i + 1) += mu * sp.w_upper;
        }
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Performance coupons

// Rescaled operator: the coupon q (z - x * accrual)^+ is detached from the
// destination value on rows that carry risky exposure.
inline Matrix coupon_rescaled_matrix(const Matrix& base, const StateGrid& grid,
                                     const ExposureRule& rule, double q, double accrual) {
    if (q < 0.0 || q >= 1.0) throw std::invalid_argument("coupons: q must be in [0, 1)");
    const auto& g = grid.points();
    const Eigen::Index n = base.rows();
    Matrix out = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (q == 0.0 || rule.weight(g[k]) == 0.0) {
            out.row(k) = base.row(k);
            continue;
        }
        for (Eigen::Index l = 0; l < n; ++l) {
            double mu = base(k, l);
            if (mu == 0.0) continue;
            double z = g[l] - q * std::max(g[l] - g[k] * accrual, 0.0);
            auto sp = grid.split(z);
            out(k, sp.i) += mu * (1.0 - sp.w_upper);
            out(k, sp.i + 1) += mu * sp.w_upper;
        }
    }
    return out;
}

// Expected coupon paid at the period end, capitalized to maturity, as a
// fraction of the guarantee, conditional on the start state.
inline Vector coupon_value_vector(const Matrix& base, const StateGrid& grid, const ExposureRule& rule,
                                  double q, double acc_start, double acc_end, double zc_to_maturity) {
    const auto& g = grid.points();
    const Eigen::Index n = base.rows();
    Vector c = Vector::Zero(n);
    if (q == 0.0) return c;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (rule.weight(g[k]) == 0.0) continue;
        double s = 0.0;
        for (Eigen::Index l = 0; l < n; ++l) {
            double mu = base(k, l);
            if (mu == 0.0) continue;
            s += mu * std::max(g[l] * acc_end - g[k] * acc_start, 0.0);
        }
        c(k) = q * s / zc_to_maturity;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Profit lock-in

struct LockinKernels {
    Matrix v0; // plain probabilities after the lock-in remap
    Matrix v1; // weighted by the guarantee growth G_{I+1}/G_I
};

// Guarantee growth factor over a lock-in period ending with destination z.
// acc_* are e^{-int_t^T (r + s_H)} at the span start/end. The factor applies
// only on rows carrying risky exposure: a defeased portfolio has no profit
// to lock (the pull-to-par drift is not performance).
inline double lockin_factor(const LockInRule& rule, double x, double z, double acc_start,
                            double acc_end) {
    if (rule.proportion <= 0.0) return 1.0;
    if (rule.kind == LockInRule::Kind::Continuous)
        return std::max(1.0, rule.proportion * z * acc_end);
    return 1.0 + rule.proportion * std::max(z * acc_end - x * acc_start, 0.0);
}

inline LockinKernels lockin_kernels(const Matrix& period_kernel, const StateGrid& grid,
                                    const ExposureRule& exposure, const LockInRule& rule,
                                    double acc_start, double acc_end) {
    auto factor = [&](double x, double z) {
        if (exposure.weight(x) == 0.0) return 1.0;
        return lockin_factor(rule, x, z, acc_start, acc_end);
    };
    LockinKernels out;
    out.v0 = detail::remap_destinations(period_kernel, grid, factor, false);
    out.v1 = detail::remap_destinations(period_kernel, grid, factor, true);
    return out;
}

// ---------------------------------------------------------------------------
// Feature-aware pricing

namespace detail {

// Bucket runs covering the local period range [a, b).
inline std::vector<KernelRun> runs_in_range(const PreparedPricing& pp, std::size_t a, std::size_t b) {
    std::vector<KernelRun> runs;
    for (std::size_t i = 0; i < pp.plan.buckets.size(); ++i) {
        const auto& bkt = pp.plan.buckets[i];
        std::size_t lo = std::max<std::size_t>(bkt.first, a);
        std::size_t hi = std::min<std::size_t>(bkt.first + std::size_t(bkt.count), b);
        if (hi > lo) runs.push_back({&pp.matrices[i].m, long(hi - lo)});
    }
    return runs;
}

// Composed kernel over the local period range [a, b).
inline Matrix kernel_over_range(const PreparedPricing& pp, std::size_t a, std::size_t b) {
    Eigen::Index n = Eigen::Index(pp.g().size());
    Matrix k = Matrix::Identity(n, n);
    for (const auto& run : runs_in_range(pp, a, b)) k = (k * fast_power(*run.m, run.count)).eval();
    return k;
}

// Local period indices (exclusive upper ends) where a feature with the given
// frequency fires; global schedule indexing so seasoned products stay aligned.
inline std::vector<std::size_t> feature_boundaries(const PreparedPricing& pp, int every_n) {
    std::vector<std::size_t> ends;
    std::size_t n_local = pp.periods.size();
    for (std::size_t j = 1; j <= n_local; ++j) {
        std::size_t global_end = pp.current_period + j; // schedule index of the period end
        if (global_end % std::size_t(every_n) == 0 || j == n_local) ends.push_back(j);
    }
    return ends;
}

struct SegmentChain {
    // per segment: operator pair for value-carrying (v1) and probability (v0)
    std::vector<Matrix> v0, v1;
    std::vector<Vector> coupon; // capitalized coupon stream per segment (may be empty)
};

// Builds the per-segment kernels with coupons and lock-in remaps applied.
inline SegmentChain build_segments(const PreparedPricing& pp) {
    const ProductSpec& spec = pp.spec;
    const StateGrid& grid = pp.g();
    SegmentChain chain;

    int freq = 0;
    if (spec.lockin && spec.lockin->kind == LockInRule::Kind::Periodic)
        freq = spec.lockin->every_n_periods;
    else if (spec.lockin && spec.lockin->kind == LockInRule::Kind::Continuous)
        freq = 1;
    if (spec.coupons) {
        if (freq == 0)
            freq = spec.coupons->every_n_periods;
        else if (spec.coupons->every_n_periods % freq != 0 && freq % spec.coupons->every_n_periods != 0)
            throw std::invalid_argument("features: coupon and lock-in schedules must nest");
        freq = std::min(freq, spec.coupons->every_n_periods);
    }
    if (freq == 0) freq = int(pp.periods.size());

    auto ends = feature_boundaries(pp, freq);
    std::size_t a = 0;
    for (std::size_t end : ends) {
        Matrix base = kernel_over_range(pp, a, end);
        std::size_t gi_start = pp.current_period + a;
        std::size_t gi_end = pp.current_period + end;
        double acc_start = pp.acc_to_maturity[gi_start];
        double acc_end = pp.acc_to_maturity[gi_end];
        bool at_coupon = spec.coupons && spec.coupons->kind == CouponSchedule::Kind::Performance &&
                         gi_end % std::size_t(spec.coupons->every_n_periods) == 0;
        bool at_lockin = spec.lockin &&
                         (spec.lockin->kind == LockInRule::Kind::Continuous ||
                          gi_end % std::size_t(spec.lockin->every_n_periods) == 0);

        Vector c;
        Matrix staged = base;
        if (at_coupon) {
            double zc_to_T = pp.curve.discount(pp.dates[gi_end], spec.maturity);
            c = coupon_value_vector(base, grid, spec.exposure, spec.coupons->q, acc_start, acc_end,
                                    zc_to_T);
            staged = coupon_rescaled_matrix(base, grid, spec.exposure, spec.coupons->q,
                                            acc_start / acc_end);
        }
        chain.coupon.push_back(c);

        if (at_lockin && spec.lockin->proportion > 0.0) {
            LockinKernels lk =
                lockin_kernels(staged, grid, spec.exposure, *spec.lockin, acc_start, acc_end);
            chain.v0.push_back(std::move(lk.v0));
            chain.v1.push_back(std::move(lk.v1));
        } else {
            chain.v0.push_back(staged);
            chain.v1.push_back(std::move(staged));
        }
        a = end;
    }
    return chain;
}

} // namespace detail

// Prices products with coupons and/or lock-in. Guarantee-scaled payoffs run
// through the v1 chain, probabilities and losses through v0; coupon streams
// accumulate along the v1 chain.
inline PricingReport price_structured(const PreparedPricing& pp, const PayoffSpec& payoff) {
    const StateGrid& grid = pp.g();
    const auto& g = grid.points();
    const Eigen::Index n = Eigen::Index(g.size());

    if (payoff.monetary && pp.spec.lockin && pp.spec.lockin->proportion > 0.0)
        throw std::invalid_argument(
            "monetary strikes with lock-in price through the absolute-strike recursion");

    PayoffSpec main = payoff;
    if (payoff.monetary) {
        main.strike = payoff.strike / pp.spec.guarantee;
        main.monetary = false;
    }

    detail::SegmentChain chain = detail::build_segments(pp);

    Vector vmain(n), vdig(n), vloss(n);
    for (Eigen::Index l = 0; l < n; ++l) {
        vmain(l) = main(g[l]);
        vdig(l) = (g[l] <= 1.0) ? 1.0 : 0.0;
        vloss(l) = std::max(1.0 - g[l], 0.0);
    }
    bool scaled = main.kind != PayoffKind::DigitalPut; // G_n-scaled payoffs

    for (std::size_t s = chain.v0.size(); s-- > 0;) {
        vmain = (scaled ? chain.v1[s] : chain.v0[s]) * vmain;
        if (chain.coupon[s].size() > 0 && scaled) vmain += chain.coupon[s];
        vdig = chain.v0[s] * vdig;
        vloss = chain.v0[s] * vloss;
    }

    PricingReport rep;
    rep.x0 = pp.x_state;
    rep.guarantee = pp.spec.guarantee;
    rep.discount = pp.discount_to_maturity;

    std::vector<double> vm(vmain.data(), vmain.data() + n), vd(vdig.data(), vdig.data() + n),
        vl(vloss.data(), vloss.data() + n);
    rep.price = rep.discount * pp.spec.guarantee * grid.interpolate(vm, rep.x0);
    if (payoff.kind == PayoffKind::Strategy || payoff.kind == PayoffKind::GuaranteedStrategy)
        rep.price += pp.fixed_coupon_pv;
    rep.gap_proportion = grid.interpolate(vd, rep.x0);
    rep.expected_loss = grid.interpolate(vl, rep.x0);
    rep.conditional_loss = (rep.gap_proportion > 0.0) ? rep.expected_loss / rep.gap_proportion : 0.0;
    for (const auto& tm : pp.matrices) {
        rep.row_sum_error = std::max(rep.row_sum_error, tm.row_sum_error());
        rep.min_entry = std::min(rep.min_entry, tm.min_entry());
        rep.second_moment_warning |= tm.second_moment_warning;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Options with strike in monetary units under lock-in: backward recursion on
// the cumulative operator Q_I(x, y) = P[Z_n <= y | state x], bilinear in both
// arguments.

// One backward step of the cumulative-operator recursion: composes the span
// kernel with Q_{I+1} evaluated at the lock-in-rescaled arguments, bilinear
// in both. Arguments outside the grid clamp to the tail cumulatives.
inline Matrix q_recursion_step(const Matrix& kernel, const Matrix& q_next, const StateGrid& grid,
                               const LockInRule* rule, const ExposureRule& exposure, double acc_start,
                               double acc_end) {
    const auto& g = grid.points();
    const Eigen::Index n = kernel.rows();
    Matrix qn = Matrix::Zero(n, n);
    std::vector<double> yq(std::size_t(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        bool gated = !rule || rule->proportion <= 0.0 || exposure.weight(g[k]) == 0.0;
        for (Eigen::Index z = 0; z < n; ++z) {
            double mu = kernel(k, z);
            if (mu == 0.0) continue;
            double f = gated ? 1.0 : lockin_factor(*rule, g[k], g[z], acc_start, acc_end);
            if (f == 1.0) {
                qn.row(k) += mu * q_next.row(z);
                continue;
            }
            // row interpolation of Q_{I+1} at x' = z/f, column at y' = y/f
            double xprime = g[z] / f;
            auto sx = grid.split(xprime);
            auto row_at = [&](Eigen::Index col) {
                return (1.0 - sx.w_upper) * q_next(Eigen::Index(sx.i), col) +
                       sx.w_upper * q_next(Eigen::Index(sx.i) + 1, col);
            };
            // y/f is increasing in y: single sweep
            Eigen::Index j = 0;
            for (Eigen::Index l = 0; l < n; ++l) {
                double yprime = g[l] / f;
                double v;
                if (yprime <= g[0]) {
                    v = 0.0; // clamp: all mass above
                } else if (yprime >= g[n - 1]) {
                    v = row_at(n - 1); // tail cumulative saturates
                } else {
                    while (j + 1 < n - 1 && g[j + 1] <= yprime) ++j;
                    double wy = (yprime - g[j]) / (g[j + 1] - g[j]);
                    v = (1.0 - wy) * row_at(j) + wy * row_at(j + 1);
                }
                yq[std::size_t(l)] = v;
            }
            for (Eigen::Index l = 0; l < n; ++l) qn(k, l) += mu * yq[std::size_t(l)];
        }
    }
    return qn;
}

inline PricingReport absolute_strike_price(const PreparedPricing& pp, const PayoffSpec& payoff) {
    if (!payoff.monetary) throw std::invalid_argument("absolute-strike pricing expects a monetary strike");
    const ProductSpec& spec = pp.spec;
    const StateGrid& grid = pp.g();
    const auto& g = grid.points();
    const Eigen::Index n = Eigen::Index(g.size());

    int freq = 1;
    if (spec.lockin && spec.lockin->kind == LockInRule::Kind::Periodic)
        freq = spec.lockin->every_n_periods;
    auto ends = detail::feature_boundaries(pp, freq);

    // terminal cumulative: step function of the terminal variable
    Matrix q(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index l = 0; l < n; ++l) q(k, l) = (g[k] <= g[l]) ? 1.0 : 0.0;

    std::size_t a = 0;
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t end : ends) {
        spans.emplace_back(a, end);
        a = end;
    }

    for (std::size_t si = spans.size(); si-- > 0;) {
        auto [sa, sb] = spans[si];
        Matrix kernel = detail::kernel_over_range(pp, sa, sb);
        double acc_start = pp.acc_to_maturity[pp.current_period + sa];
        double acc_end = pp.acc_to_maturity[pp.current_period + sb];
        q = q_recursion_step(kernel, q, grid, spec.lockin ? &*spec.lockin : nullptr, spec.exposure,
                             acc_start, acc_end);
    }

    // start-state cumulative and bin masses of the terminal monetary value
    auto sx = grid.split(pp.x_state);
    std::vector<double> cum(n);
    for (Eigen::Index l = 0; l < n; ++l)
        cum[std::size_t(l)] =
            (1.0 - sx.w_upper) * q(Eigen::Index(sx.i), l) + sx.w_upper * q(Eigen::Index(sx.i) + 1, l);

    PricingReport rep;
    rep.x0 = pp.x_state;
    rep.guarantee = spec.guarantee;
    rep.discount = pp.discount_to_maturity;

    // Z_n = C_n / G0: evaluate the monetary payoff on Z bins
    double price = 0.0, gap = 0.0, eloss = 0.0;
    double prev = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
        double mass = cum[std::size_t(l)] - prev;
        prev = cum[std::size_t(l)];
        double z = g[l];
        double c_term = z * spec.guarantee;
        PayoffSpec mon = payoff;
        price += mass * (mon.kind == PayoffKind::DigitalPut ? (c_term <= mon.strike ? 1.0 : 0.0)
                         : mon.kind == PayoffKind::Put      ? std::max(mon.strike - c_term, 0.0)
                         : mon.kind == PayoffKind::Call     ? std::max(c_term - mon.strike, 0.0)
                                                            : c_term);
        if (z <= 1.0) {
            gap += mass;
            eloss += mass * std::max(1.0 - z, 0.0);
        }
    }
    rep.price = rep.discount * price;
    rep.gap_proportion = gap;
    rep.expected_loss = eloss;
    rep.conditional_loss = (gap > 0.0) ? eloss / gap : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Open-ended American pricing with continuous lock-in

struct AmericanResult {
    PricingReport report;
    bool converged = true;     // value flattened over the last tenth of horizon
    double tail_change = 0.0;  // relative change of the value over that span
};

inline AmericanResult open_ended_price(const PreparedPricing& pp, const PayoffSpec& exercise) {
    const ProductSpec& spec = pp.spec;
    if (!spec.lockin || spec.lockin->kind != LockInRule::Kind::Continuous)
        throw std::invalid_argument("open-ended pricing needs a continuous lock-in");
    const StateGrid& grid = pp.g();
    const auto& g = grid.points();
    const Eigen::Index n = Eigen::Index(g.size());

    // per-bucket lock-in kernels; flat threshold makes the accruals 1
    std::vector<LockinKernels> lk(pp.matrices.size());
    for (std::size_t b = 0; b < pp.matrices.size(); ++b)
        lk[b] = lockin_kernels(pp.matrices[b].m, grid, spec.exposure, *spec.lockin, 1.0, 1.0);

    Vector ex(n);
    for (Eigen::Index l = 0; l < n; ++l) ex(l) = exercise(g[l]);
    Vector value = ex;

    const long n_periods = long(pp.periods.size());
    std::vector<double> at_x0;
    at_x0.reserve(std::size_t(n_periods));
    std::vector<double> vv(g.size());
    for (std::size_t b = pp.plan.buckets.size(); b-- > 0;) {
        const double zc = pp.plan.buckets[b].terms.zc;
        for (long i = 0; i < pp.plan.buckets[b].count; ++i) {
            // discounted continuation vs immediate exercise
            value = (zc * (lk[b].v1 * value)).cwiseMax(ex);
            Eigen::Map<Vector>(vv.data(), n) = value;
            at_x0.push_back(grid.interpolate(vv, pp.x_state));
        }
    }

    AmericanResult res;
    res.report.x0 = pp.x_state;
    res.report.guarantee = spec.guarantee;
    res.report.discount = pp.discount_to_maturity;
    res.report.price = spec.guarantee * at_x0.back(); // value in units of current guarantee

    long tail = std::max<long>(n_periods / 10, 1);
    double early = at_x0[std::size_t(n_periods - 1 - tail)];
    double last = at_x0.back();
    res.tail_change = std::abs(last - early) / std::max(std::abs(last), 1e-12);
    res.converged = res.tail_change < 0.01;
    return res;
}

// ---------------------------------------------------------------------------
// Conditional rebalancing: 2-d state (X, Y) with W = w(X) / (1 + Y)

struct BandedConfig {
    double beta = 0.02;
    int y_points = 5;
};

inline PricingReport banded_rebalance_price(const PreparedPricing& pp, const PayoffSpec& payoff,
                                            const BandedConfig& bc) {
    if (bc.y_points < 1) throw std::invalid_argument("banded: need at least one Y point");
    if (!(bc.beta > 0.0)) throw std::invalid_argument("banded: beta must be > 0");
    if (bc.y_points > 1 && bc.y_points < 3) throw std::invalid_argument("banded: y resolution too low");
    const StateGrid& grid = pp.g();
    const auto& g = grid.points();
    const Eigen::Index n = Eigen::Index(g.size());
    const int ny = bc.y_points;

    std::vector<double> ys(ny);
    for (int j = 0; j < ny; ++j)
        ys[j] = (ny == 1) ? 0.0 : -bc.beta + 2.0 * bc.beta * double(j) / double(ny - 1);
    int j0 = ny / 2; // Y = 0 start

    auto y_split = [&](double y) {
        if (ny == 1 || y <= ys.front()) return std::pair<int, double>{0, 0.0};
        if (y >= ys.back()) return std::pair<int, double>{ny - 2, 1.0};
        double pos = (y - ys.front()) / (ys[1] - ys[0]);
        int j = std::min(int(pos), ny - 2);
        return std::pair<int, double>{j, pos - j};
    };

    // value blocks: [main payoff, digital, loss]
    Matrix value(n * ny, 3);
    PayoffSpec main = payoff;
    if (payoff.monetary) {
        main.strike = payoff.strike / pp.spec.guarantee;
        main.monetary = false;
    }
    for (Eigen::Index k = 0; k < n; ++k)
        for (int j = 0; j < ny; ++j) {
            value(k * ny + j, 0) = main(g[k]);
            value(k * ny + j, 1) = (g[k] <= 1.0) ? 1.0 : 0.0;
            value(k * ny + j, 2) = std::max(1.0 - g[k], 0.0);
        }

    // one (N ny) x (N ny) transition per bucket: X-row masses from the
    // shared row builder, Y destination deterministic given (k, j, l)
    Matrix row(1, n);
    TransitionMatrix diag;
    diag.grid = pp.grid;
    for (std::size_t b = pp.plan.buckets.size(); b-- > 0;) {
        const auto& bucket = pp.plan.buckets[b];
        RowBuilder builder(grid, pp.laws[b], bucket.terms);
        Matrix big = Matrix::Zero(n * ny, n * ny);
        for (Eigen::Index k = 0; k < n; ++k) {
            double wx = pp.spec.exposure.weight(g[k]);
            for (int j = 0; j < ny; ++j) {
                double w_eff = wx / (1.0 + ys[j]);
                builder.fill(g[k], w_eff, row.row(0), diag);
                for (Eigen::Index l = 0; l < n; ++l) {
                    double mu = row(0, l);
                    if (mu == 0.0) continue;
                    double alpha = (w_eff > 0.0) ? pp.spec.exposure.weight(g[l]) / w_eff - 1.0 : 0.0;
                    double ynext = (std::abs(alpha) <= bc.beta) ? alpha : 0.0;
                    auto [jn, wy] = y_split(ynext);
                    big(k * ny + j, l * ny + jn) += mu * (1.0 - wy);
                    big(k * ny + j, l * ny + std::min(jn + 1, ny - 1)) += mu * wy;
                }
            }
        }
        for (long rep = 0; rep < bucket.count; ++rep) value = (big * value).eval();
    }

    PricingReport repo;
    repo.x0 = pp.x_state;
    repo.guarantee = pp.spec.guarantee;
    repo.discount = pp.discount_to_maturity;
    auto interp_at = [&](int col) {
        std::vector<double> v(g.size());
        for (Eigen::Index k = 0; k < n; ++k) v[std::size_t(k)] = value(k * ny + j0, col);
        return grid.interpolate(v, pp.x_state);
    };
    repo.price = repo.discount * pp.spec.guarantee * interp_at(0);
    repo.gap_proportion = interp_at(1);
    repo.expected_loss = interp_at(2);
    repo.conditional_loss = (repo.gap_proportion > 0.0) ? repo.expected_loss / repo.gap_proportion : 0.0;
    return repo;
}

// ---------------------------------------------------------------------------
// Entry point dispatching on the product's features.

inline PricingReport price_product(const PreparedPricing& pp, const PayoffSpec& payoff) {
    if (pp.spec.open_ended) return open_ended_price(pp, payoff).report;
    if (pp.spec.lockin && pp.spec.lockin->proportion > 0.0) {
        if (payoff.monetary) return absolute_strike_price(pp, payoff);
        return price_structured(pp, payoff);
    }
    if (pp.spec.coupons && pp.spec.coupons->kind == CouponSchedule::Kind::Performance &&
        pp.spec.coupons->q > 0.0)
        return price_structured(pp, payoff);
    return price_plain(pp, payoff); // fixed coupons live in the period terms
}

} // namespace cppim
