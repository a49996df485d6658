#pragma once

// One-period transition matrices for the rescaled CPPI value.
//
// Over one period, conditionally on X_i = x with weighting w = w(x),
//
//   X_{i+1} = a(x) R + b(x),   R = F_{i+1}/F_i,
//   a(x) = e^{-int s_H} * spot_ratio * x * w,
//   b(x) = e^{-int s_H} * ( x (1-w) e^{int s_pm} - e^{-int r} * fee(x, w) ),
//
// so row masses are cumulative differences of the return law at the bin
// separators. Rows with a(x) = 0 are pure drift and go through the 5-point
// negative-probability stencil; stochastic rows get their mass binned and
// then corrected so that, per block (below/above the threshold separator),
// the grid mass, mean and second moment match the analytic partial moments.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cppim/grid.hpp"
#include "cppim/process.hpp"
#include "cppim/product.hpp"

namespace cppim {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Period quantities entering the kernel; spreads, fees and discounts are
// already accrued over the period (ACT/365, continuous compounding).
struct KernelTerms {
    double tau = 7.0 / 365.0;
    double e_msH = 1.0; // e^{-int s_H dt}
    double e_sp = 1.0;  // e^{int s_+ dt}
    double e_sm = 1.0;  // e^{int s_- dt}
    double zc = 1.0;    // e^{-int r dt}
    double fee_prop = 0.0;
    double fee_def = 0.0;
    double fee_risky = 0.0;
    double fee_fixed_over_h = 0.0; // fixed fee / threshold value at period start
    double spot_ratio = 1.0;       // F_t / F_0 inside a started first period

    double fee_amount(double x, double w) const {
        return ((w > 0.0 ? fee_prop : fee_def) + fee_risky * w) * x + fee_fixed_over_h;
    }

    double coef_a(double x, double w) const { return e_msH * spot_ratio * x * w; }
    double coef_b(double x, double w) const {
        double s_factor = (w <= 1.0) ? e_sp : e_sm;
        return e_msH * (x * (1.0 - w) * s_factor - zc * fee_amount(x, w));
    }
};

// Gross-return strike making X move from x to y over the period.
inline double level_function(double x, double y, double w, const KernelTerms& t) {
    if (w == 0.0) throw std::invalid_argument("level function: w = 0 rows are not invertible");
    if (x == 0.0) throw std::invalid_argument("level function: x = 0 has no risky dynamics");
    return (y - t.coef_b(x, w)) / t.coef_a(x, w);
}

struct RowMoments {
    double mean = 0.0;
    double variance = 0.0;
    double a = 0.0, b = 0.0;
};

inline RowMoments analytic_row_moments(double x, const ReturnLaw& law, const ExposureRule& rule,
                                       const KernelTerms& terms) {
    double w = rule.weight(x);
    RowMoments r;
    r.a = terms.coef_a(x, w);
    r.b = terms.coef_b(x, w);
    r.mean = r.a + r.b;
    r.variance = r.a * r.a * (law.m2() - 1.0);
    return r;
}

// How each row was produced. Degraded rows met a structural limit (capped q,
// no room for the 5-point pattern, target outside the grid) and carry exact
// mass and mean but only best-effort variance.
enum class RowKind : unsigned char { Binned = 0, Stencil = 1, Hybrid = 2, Degraded = 3 };

struct TransitionMatrix {
    Matrix m;
    std::shared_ptr<const StateGrid> grid;
    std::vector<RowKind> row_kind;
    int clamped_targets = 0;   // drift targets outside the grid
    int stencil_rows = 0;      // rows through the convective scheme
    int capped_stencils = 0;   // stencil rows with q capped at 0.05
    bool second_moment_warning = false;

    double row_sum_error() const {
        double worst = 0.0;
        for (Eigen::Index k = 0; k < m.rows(); ++k) worst = std::max(worst, std::abs(m.row(k).sum() - 1.0));
        return worst;
    }
    double min_entry() const { return m.minCoeff(); }
};

struct BuildOptions {
    bool moment_control = true;
    double stencil_alpha = 0.1;
    double stencil_q_cap = 0.05;
};

namespace detail {

// 5-point drift pattern carrying `mass` with exact first moment and a
// prescribed small variance, confined to point indices [lo, hi]. Negative
// probabilities appear at the -q positions; q is bounded by the cap. Returns
// false when only the 2-point fallback (exact mean, best-effort variance)
// was possible.
inline bool stencil_block(Eigen::Ref<Eigen::Matrix<double, 1, Eigen::Dynamic>> row, const StateGrid& grid,
                          Eigen::Index lo, Eigen::Index hi, double mass, double mean, double variance,
                          const BuildOptions& opt, TransitionMatrix& diag) {
    const auto& g = grid.points();
    if (mass <= 0.0) return true;

    if (mean <= g[lo]) {
        row(lo) += mass;
        if (mean < g[lo]) ++diag.clamped_targets;
        return mean == g[lo] && variance == 0.0;
    }
    if (mean >= g[hi]) {
        row(hi) += mass;
        if (mean > g[hi]) ++diag.clamped_targets;
        return mean == g[hi] && variance == 0.0;
    }
    auto it = std::lower_bound(g.begin() + lo, g.begin() + hi + 1, mean);
    Eigen::Index i = Eigen::Index(it - g.begin());
    if (g[i] == mean && variance == 0.0) {
        row(i) += mass; // exact representation
        return true;
    }
    if (i - 3 < lo || i + 1 > hi) {
        auto s = grid.split(mean);
        Eigen::Index a = std::clamp(Eigen::Index(s.i), lo, hi - 1);
        row(a) += mass * (1.0 - s.w_upper);
        row(a + 1) += mass * s.w_upper;
        return false;
    }

    const double alpha = opt.stencil_alpha;
    double g3 = g[i - 3], g2 = g[i - 2], g1 = g[i - 1], g0 = g[i], gp = g[i + 1];
    // unknowns (p, q) per unit mass:
    //   p (g1 - g0) + q (alpha g3 - g2 + (2-alpha) g0 - gp) = mean - g0
    //   same with squares                                   = e2 - g0^2
    double a11 = g1 - g0;
    double a12 = alpha * g3 - g2 + (2.0 - alpha) * g0 - gp;
    double a21 = g1 * g1 - g0 * g0;
    double a22 = alpha * g3 * g3 - g2 * g2 + (2.0 - alpha) * g0 * g0 - gp * gp;
    double r1 = mean - g0;
    double r2 = (variance + mean * mean) - g0 * g0;
    double det = a11 * a22 - a12 * a21;
    double p, q;
    bool exact = true;
    if (std::abs(det) < 1e-300) {
        q = 0.0;
        p = r1 / a11;
        exact = false;
    } else {
        p = (r1 * a22 - a12 * r2) / det;
        q = (a11 * r2 - r1 * a21) / det;
    }
    if (q < 0.0) {
        q = 0.0;
        p = r1 / a11;
        exact = false;
    } else if (q > opt.stencil_q_cap) {
        q = opt.stencil_q_cap;
        p = (r1 - q * a12) / a11;
        ++diag.capped_stencils;
        exact = false;
    }
    row(i - 3) += mass * alpha * q;
    row(i - 2) -= mass * q;
    row(i - 1) += mass * p;
    row(i) += mass * (1.0 - p + (2.0 - alpha) * q);
    row(i + 1) -= mass * q;
    return exact;
}

struct BlockTargets {
    double mass = 0.0, e1 = 0.0, e2 = 0.0;
};

// Shift-then-scale moment fix confined to the point range [lo, hi]. The
// remapped positions z_l = mean + s (g_l + shift - mean) move each bin's mass
// a fraction of a bin toward (s < 1) or away from (s > 1) the mean; linear
// splitting preserves mass and first moment, so the block mean stays exact
// for every s and the scale is solved for the binned second moment.
inline bool fix_block_moments(std::vector<double>& mass, const StateGrid& grid, Eigen::Index lo,
                              Eigen::Index hi, const BlockTargets& tgt, std::vector<double>& scratch) {
    if (hi <= lo) return true;
    const auto& g = grid.points();
    double m = 0.0, e1 = 0.0;
    for (Eigen::Index l = lo; l <= hi; ++l) {
        m += mass[l];
        e1 += mass[l] * g[l];
    }
    if (m < 1e-15) return true;

    const double mean_tgt = tgt.e1 / m;

    // positions are monotone in l, so the destination bin scan is a single
    // forward sweep; returns the block first and second moments
    auto apply = [&](double shift, double s, std::vector<double>& out, double& oe1, double& oe2) {
        std::fill(out.begin() + lo, out.begin() + hi + 1, 0.0);
        Eigen::Index idx = lo;
        oe1 = 0.0;
        oe2 = 0.0;
        for (Eigen::Index l = lo; l <= hi; ++l) {
            double mu = mass[l];
            if (mu == 0.0) continue;
            double z = mean_tgt + s * (g[l] + shift - mean_tgt);
            if (z <= g[lo]) {
                out[lo] += mu;
                oe1 += mu * g[lo];
                oe2 += mu * g[lo] * g[lo];
                continue;
            }
            if (z >= g[hi]) {
                out[hi] += mu;
                oe1 += mu * g[hi];
                oe2 += mu * g[hi] * g[hi];
                continue;
            }
            while (idx + 1 < hi && g[idx + 1] <= z) ++idx;
            double wu = (z - g[idx]) / (g[idx + 1] - g[idx]);
            wu = std::clamp(wu, 0.0, 1.0);
            out[idx] += mu * (1.0 - wu);
            out[idx + 1] += mu * wu;
            oe1 += mu * ((1.0 - wu) * g[idx] + wu * g[idx + 1]);
            oe2 += mu * ((1.0 - wu) * g[idx] * g[idx] + wu * g[idx + 1] * g[idx + 1]);
        }
    };

    const double tol2 = 1e-13 * std::max({std::abs(tgt.e2), m * mean_tgt * mean_tgt, 1e-30});
    const double scale1 = std::max({std::abs(tgt.e1), m * std::abs(mean_tgt), 1e-12});
    const double tol1 = 1e-12 * scale1;

    double shift = (tgt.e1 - e1) / m;
    double scale = 1.0;
    double fe1 = 0.0, fe2 = 0.0;

    // The block mean is continuous and nondecreasing in the shift even with
    // edge clamping, so it can always be solved exactly by bisection when the
    // target lies inside the block. The spread scale is solved by secant for
    // the second moment; it preserves the mean except through clamping, so
    // the rounds end on a mean solve.
    auto solve_shift = [&]() {
        apply(shift, scale, scratch, fe1, fe2);
        if (std::abs(fe1 - tgt.e1) <= tol1) return;
        shift += (tgt.e1 - fe1) / m; // unclamped first guess
        apply(shift, scale, scratch, fe1, fe2);
        if (std::abs(fe1 - tgt.e1) <= tol1) return;
        double span = g[hi] - g[lo];
        double d_lo = shift, d_hi = shift;
        for (int it = 0; it < 80 && fe1 < tgt.e1; ++it) {
            d_lo = d_hi;
            d_hi += span;
            apply(d_hi, scale, scratch, fe1, fe2);
            span *= 2.0;
        }
        span = g[hi] - g[lo];
        for (int it = 0; it < 80 && fe1 > tgt.e1; ++it) {
            d_hi = d_lo;
            d_lo -= span;
            apply(d_lo, scale, scratch, fe1, fe2);
            span *= 2.0;
        }
        for (int it = 0; it < 100; ++it) {
            shift = 0.5 * (d_lo + d_hi);
            apply(shift, scale, scratch, fe1, fe2);
            if (std::abs(fe1 - tgt.e1) <= tol1) break;
            (fe1 < tgt.e1 ? d_lo : d_hi) = shift;
        }
    };

    auto solve_scale = [&]() {
        apply(shift, scale, scratch, fe1, fe2);
        double cur_var = std::max(fe2 - m * mean_tgt * mean_tgt, 0.0);
        double var_tgt = std::max(tgt.e2 - m * mean_tgt * mean_tgt, 0.0);
        double sa = (cur_var > 1e-300) ? scale * std::sqrt(var_tgt / cur_var) : scale;
        sa = std::clamp(sa, 0.0, 50.0);
        apply(shift, sa, scratch, fe1, fe2);
        double fa = fe2 - tgt.e2;
        double best_s = sa, best_f = std::abs(fa);
        double sb = sa * 1.05 + 1e-4;
        for (int it = 0; it < 40 && best_f > tol2; ++it) {
            apply(shift, sb, scratch, fe1, fe2);
            double fb = fe2 - tgt.e2;
            if (std::abs(fb) < best_f) {
                best_f = std::abs(fb);
                best_s = sb;
            }
            double denom = fb - fa;
            double next = (std::abs(denom) > 1e-300) ? sb - fb * (sb - sa) / denom : 0.5 * (sa + sb);
            next = std::clamp(next, 0.0, 50.0);
            sa = sb;
            fa = fb;
            if (std::abs(next - sb) < 1e-15) break;
            sb = next;
        }
        scale = best_s;
    };

    const bool mean_reachable = tgt.e1 / m > g[lo] && tgt.e1 / m < g[hi];
    solve_shift();
    for (int round = 0; round < 2; ++round) {
        solve_scale();
        solve_shift();
        apply(shift, scale, scratch, fe1, fe2);
        if (std::abs(fe2 - tgt.e2) <= 1e-7 * std::max({std::abs(tgt.e2), m * mean_tgt * mean_tgt, 1e-12}))
            break;
    }
    apply(shift, scale, scratch, fe1, fe2);
    for (Eigen::Index l = lo; l <= hi; ++l) mass[l] = scratch[l];

    double scale2 = std::max({std::abs(tgt.e2), m * mean_tgt * mean_tgt, 1e-12});
    return mean_reachable && std::abs(fe1 - tgt.e1) <= 1e-9 * scale1 &&
           std::abs(fe2 - tgt.e2) <= 1e-7 * scale2;
}

} // namespace detail

// Fills one transition row for a start value x with weighting w. Shared by
// the matrix builder and the two-dimensional conditional-rebalancing pricer.
class RowBuilder {
public:
    RowBuilder(const StateGrid& grid, const ReturnLaw& law, const KernelTerms& terms,
               const BuildOptions& opt = {})
        : grid_(grid), law_(law), terms_(terms), opt_(opt), cum_(grid.separators().size()),
          mass_(grid.size()), scratch_(grid.size()) {}

    RowKind fill(double x, double w, Eigen::Ref<Eigen::Matrix<double, 1, Eigen::Dynamic>> row,
                 TransitionMatrix& diag) const {
        const auto& g = grid_.points();
        const auto& seps = grid_.separators();
        const Eigen::Index n = Eigen::Index(g.size());
        const double m2 = law_.m2();
        const bool aligned = grid_.threshold_separator_aligned();
        const Eigen::Index ti = Eigen::Index(grid_.threshold_index());

        const double a = terms_.coef_a(x, w);
        const double b = terms_.coef_b(x, w);
        const double mean = a + b;
        const double var = a * a * (m2 - 1.0);

        if (std::abs(a) < 1e-13 * std::max(1.0, std::abs(x))) {
            // pure drift: the convective scheme
            row.setZero();
            ++diag.stencil_rows;
            bool exact = detail::stencil_block(row, grid_, 0, n - 1, 1.0, b, 0.0, opt_, diag);
            return exact ? RowKind::Stencil : RowKind::Degraded;
        }

        // quasi-deterministic: the true variance is below what nonnegative
        // masses on the bracketing points can represent; split the exact
        // sub-threshold block off and represent the rest by the stencil
        bool quasi_det = true;
        if (mean > g.front() && mean < g.back()) {
            auto s = grid_.split(mean);
            double vmin = (mean - g[s.i]) * (g[s.i + 1] - mean);
            quasi_det = var < vmin;
        }
        if (quasi_det) {
            row.setZero();
            ++diag.stencil_rows;
            detail::BlockTargets sub = aligned ? sub_moments(a, b) : detail::BlockTargets{};
            detail::BlockTargets sup{1.0 - sub.mass, mean - sub.e1,
                                     (a * a * m2 + 2.0 * a * b + b * b) - sub.e2};
            RowKind kind = RowKind::Stencil;
            bool exact = true;
            if (sub.mass > 1e-15 && ti >= 1) {
                // crossing mass with exact mean, parked below the threshold
                double mu = sub.e1 / sub.mass;
                auto sp = grid_.split(std::min(mu, 1.0));
                Eigen::Index i = std::min(Eigen::Index(sp.i), ti - 1);
                double wu = (i == Eigen::Index(sp.i)) ? sp.w_upper : 1.0;
                row(i) += sub.mass * (1.0 - wu);
                row(i + 1) += sub.mass * wu;
                kind = RowKind::Hybrid;
            }
            if (sup.mass > 1e-15) {
                double mu = sup.e1 / sup.mass;
                double v = std::max(sup.e2 / sup.mass - mu * mu, 0.0);
                Eigen::Index lo = aligned ? ti + 1 : Eigen::Index(0);
                exact = detail::stencil_block(row, grid_, lo, n - 1, sup.mass, mu, v, opt_, diag);
            }
            return exact ? kind : RowKind::Degraded;
        }

        // bin masses from cumulative differences at the separators
        auto& cum = cum_;
        auto& mass = mass_;
        if (a > 0.0) {
            for (std::size_t j = 0; j < cum.size(); ++j) cum[j] = law_.p1((seps[j] - b) / a);
        } else {
            for (std::size_t j = 0; j < cum.size(); ++j) cum[j] = 1.0 - law_.p1((seps[j] - b) / a);
        }
        mass[0] = cum[0];
        for (std::size_t l = 1; l + 1 < std::size_t(n); ++l) mass[l] = cum[l] - cum[l - 1];
        mass[n - 1] = 1.0 - cum[n - 2];
        // spline wiggles can produce ~1e-10 negatives; push them into the
        // next bin (within the threshold block) so row sum and block masses
        // are untouched
        auto clamp_negatives = [&](Eigen::Index lo, Eigen::Index hi) {
            for (Eigen::Index l = lo; l < hi; ++l)
                if (mass[l] < 0.0) {
                    mass[l + 1] += mass[l];
                    mass[l] = 0.0;
                }
            if (mass[hi] < 0.0 && hi > lo) {
                mass[hi - 1] += mass[hi];
                mass[hi] = 0.0;
            }
        };
        if (aligned) {
            clamp_negatives(0, ti);
            clamp_negatives(ti + 1, n - 1);
        } else {
            clamp_negatives(0, n - 1);
        }

        RowKind kind = RowKind::Binned;
        if (opt_.moment_control) {
            // analytic block moments at the threshold separator
            detail::BlockTargets sub = sub_moments(a, b);
            detail::BlockTargets sup{1.0 - sub.mass, mean - sub.e1,
                                     (a * a * m2 + 2.0 * a * b + b * b) - sub.e2};
            bool ok = true;
            if (aligned) {
                ok = detail::fix_block_moments(mass, grid_, 0, ti, sub, scratch_);
                ok = detail::fix_block_moments(mass, grid_, ti + 1, n - 1, sup, scratch_) && ok;
            } else {
                detail::BlockTargets all{1.0, mean, var + mean * mean};
                ok = detail::fix_block_moments(mass, grid_, 0, n - 1, all, scratch_);
            }
            if (mean < g.front() || mean > g.back()) {
                ++diag.clamped_targets;
                ok = false;
            }
            if (!ok) kind = RowKind::Degraded;
        }

        for (Eigen::Index l = 0; l < n; ++l) row(l) = mass[l];
        return kind;
    }

private:
    detail::BlockTargets sub_moments(double a, double b) const {
        detail::BlockTargets sub;
        double L1 = (1.0 - b) / a;
        double p1v = law_.p1(L1), p2v = law_.p2(L1), p3v = law_.p3(L1);
        double m2 = law_.m2();
        if (a > 0.0) {
            sub.mass = p1v;
            sub.e1 = a * p2v + b * p1v;
            sub.e2 = a * a * p3v + 2.0 * a * b * p2v + b * b * p1v;
        } else {
            sub.mass = 1.0 - p1v;
            sub.e1 = a * (1.0 - p2v) + b * (1.0 - p1v);
            sub.e2 = a * a * (m2 - p3v) + 2.0 * a * b * (1.0 - p2v) + b * b * (1.0 - p1v);
        }
        return sub;
    }

    const StateGrid& grid_;
    const ReturnLaw& law_;
    const KernelTerms& terms_;
    BuildOptions opt_;
    mutable std::vector<double> cum_, mass_, scratch_;
};

inline TransitionMatrix build_period_matrix(std::shared_ptr<const StateGrid> grid_ptr,
                                            const ReturnLaw& law, const ExposureRule& rule,
                                            const KernelTerms& terms, const BuildOptions& opt = {}) {
    const StateGrid& grid = *grid_ptr;
    const auto& g = grid.points();
    const Eigen::Index n = Eigen::Index(g.size());

    TransitionMatrix out;
    out.grid = grid_ptr;
    out.m.resize(n, n);
    out.row_kind.assign(std::size_t(n), RowKind::Binned);
    out.second_moment_warning = law.second_moment_warning();

    RowBuilder builder(grid, law, terms, opt);
    for (Eigen::Index k = 0; k < n; ++k)
        out.row_kind[k] = builder.fill(g[k], rule.weight(g[k]), out.m.row(k), out);
    return out;
}

} // namespace cppim
