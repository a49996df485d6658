#pragma once

// Discretization grid for the rescaled CPPI value X = C/H, plus the
// separation grid defining a partition of the real axis. Bin l is
// (sep[l-1], sep[l]] with the first bin extending to -inf and the last to
// +inf, so bin masses of any law sum to exactly 1.
//
// The grid always contains the threshold X = 1; the separator just above the
// threshold point is placed exactly at 1 so that a row's sub-threshold mass
// comes out of the cumulative directly (defeasance mass is exact by
// construction). With a cushion limit the section [1, x_cl] is geometric:
// dynamics there are pure drift and a multiplicative grid keeps the drift
// aligned.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cppim/math.hpp"

namespace cppim {

class StateGrid {
public:
    StateGrid(std::vector<double> points, std::vector<double> separators,
              std::optional<double> cushion_level = std::nullopt)
        : points_(std::move(points)), seps_(std::move(separators)) {
        const std::size_t n = points_.size();
        if (n < 2) throw std::invalid_argument("grid: need at least 2 points");
        if (seps_.size() != n - 1) throw std::invalid_argument("grid: need N-1 interior separators");
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (!(points_[i] < points_[i + 1])) throw std::invalid_argument("grid: points not increasing");
            if (!(points_[i] <= seps_[i] && seps_[i] <= points_[i + 1]))
                throw std::invalid_argument("grid: separators not interleaved");
        }
        for (std::size_t i = 0; i + 1 < seps_.size(); ++i)
            if (!(seps_[i] < seps_[i + 1])) throw std::invalid_argument("grid: separators not increasing");

        auto it = std::lower_bound(points_.begin(), points_.end(), 1.0);
        if (it == points_.end() || *it != 1.0)
            throw std::invalid_argument("grid: threshold X=1 must be a grid point");
        threshold_idx_ = std::size_t(it - points_.begin());

        if (cushion_level) {
            auto ic = std::lower_bound(points_.begin(), points_.end(), *cushion_level);
            if (ic == points_.end() || std::abs(*ic - *cushion_level) > 1e-12)
                throw std::invalid_argument("grid: cushion-limit level must be a grid point");
            cushion_idx_ = std::size_t(ic - points_.begin());
        }
    }

    std::size_t size() const { return points_.size(); }
    const std::vector<double>& points() const { return points_; }
    const std::vector<double>& separators() const { return seps_; }
    double point(std::size_t i) const { return points_[i]; }

    // separator above bin l (+inf for the last bin)
    double upper_sep(std::size_t l) const {
        return l < seps_.size() ? seps_[l] : std::numeric_limits<double>::infinity();
    }
    // separator below bin l (-inf for the first bin)
    double lower_sep(std::size_t l) const {
        return l == 0 ? -std::numeric_limits<double>::infinity() : seps_[l - 1];
    }

    std::size_t threshold_index() const { return threshold_idx_; }
    std::optional<std::size_t> cushion_index() const { return cushion_idx_; }

    // true when the separator structure makes bins 0..threshold_index the
    // exact sub-threshold block
    bool threshold_separator_aligned() const {
        return threshold_idx_ < seps_.size() && seps_[threshold_idx_] == 1.0;
    }

    // Index of the bin containing x: bins are (sep[l-1], sep[l]].
    std::size_t bin_of(double x) const {
        auto it = std::lower_bound(seps_.begin(), seps_.end(), x);
        return std::size_t(it - seps_.begin());
    }

    // Mass-preserving, first-moment-preserving split of a point mass at z
    // onto the two adjacent grid points. Clamped at the boundaries.
    struct Split {
        std::size_t i;  // lower point index
        double w_upper; // weight on point i+1
    };
    Split split(double z) const {
        const auto& p = points_;
        if (z <= p.front()) return {0, 0.0};
        if (z >= p.back()) return {p.size() - 2, 1.0};
        std::size_t i = std::size_t(std::upper_bound(p.begin(), p.end(), z) - p.begin()) - 1;
        if (i >= p.size() - 1) i = p.size() - 2;
        return {i, (z - p[i]) / (p[i + 1] - p[i])};
    }

    // Linear-interpolation weights of a value vector at x.
    double interpolate(const std::vector<double>& values, double x) const {
        Split s = split(x);
        return values[s.i] * (1.0 - s.w_upper) + values[s.i + 1] * s.w_upper;
    }

private:
    std::vector<double> points_, seps_;
    std::size_t threshold_idx_ = 0;
    std::optional<std::size_t> cushion_idx_;
};

// Interior separators: arithmetic midpoints, geometric midpoints inside
// [exp_lo, exp_hi] (the exponential grid section).
inline std::vector<double> default_separators(const std::vector<double>& points, std::size_t exp_lo = 0,
                                              std::size_t exp_hi = 0) {
    if (points.size() < 2) throw std::invalid_argument("separators: need at least 2 points");
    std::vector<double> s(points.size() - 1);
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        bool geometric = exp_hi > exp_lo && i >= exp_lo && i + 1 <= exp_hi && points[i] > 0.0;
        s[i] = geometric ? std::sqrt(points[i] * points[i + 1]) : 0.5 * (points[i] + points[i + 1]);
    }
    return s;
}

struct GridSpec {
    std::size_t n_points = 500;
    double eps = 1e-8;              // tail probability for the upper bound
    double x0 = 1.5;                // starting rescaled value
    double w_max = 4.0;             // maximum exposure (multiplier if uncapped)
    double sigma_atm = 0.2;         // total at-the-money volatility
    double horizon = 10.0;          // years to maturity
    std::optional<double> cushion_limit; // cushion fraction triggering full monetization
    double cluster_fraction = 0.4;  // share of points inside [0.8, 1.5]
};

namespace detail {

// Geometric spacing ratio r such that d (r + r^2 + ... + r^n) = span.
inline double geometric_ratio(double d, double span, std::size_t n) {
    if (n == 0 || span <= 0.0) return 1.0;
    auto total = [&](double r) {
        double s = 0.0, step = d;
        for (std::size_t i = 0; i < n; ++i) {
            step *= r;
            s += step;
        }
        return s;
    };
    double lo = 0.05, hi = 1.0;
    while (total(hi) < span && hi < 1e6) hi *= 1.5;
    for (int it = 0; it < 200; ++it) {
        double r = 0.5 * (lo + hi);
        (total(r) < span ? lo : hi) = r;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Builds the grid: lognormal-quantile upper bound on the cushion, lower
// bound (1 - w_max) * U, a dense uniform core around the threshold holding
// ~cluster_fraction of the points (widened to cover the start state), and
// geometric tails out to the bounds. With a cushion limit the section
// [1, x_cl] is geometric.
inline StateGrid build_grid(const GridSpec& gs) {
    if (gs.n_points < 50) throw std::invalid_argument("grid: n_points must be >= 50");
    if (!(gs.eps > 0.0 && gs.eps < 0.01)) throw std::invalid_argument("grid: eps must be in (0, 0.01)");
    if (!(gs.w_max > 0.0)) throw std::invalid_argument("grid: w_max must be > 0");

    const double v = gs.w_max * gs.sigma_atm;
    const double cushion0 = std::max(gs.x0 - 1.0, 0.05);
    const double z = norm_upper_quantile(gs.eps);
    double upper = 1.0 + cushion0 * std::exp(-0.5 * v * v * gs.horizon + v * std::sqrt(gs.horizon) * z);
    upper = std::max(upper, std::max(gs.x0 * 1.5, 4.0)); // bracket the start state widely
    double lower = (1.0 - gs.w_max) * upper;
    if (lower > -0.1) lower = -0.1; // keep a usable defeasance region
    if (gs.w_max <= 1.0) lower = 0.0;

    const std::size_t n = gs.n_points;

    // dense core [0.8, 1.5] plus an extension so the start state sits in a
    // well-resolved region
    const double core_lo = 0.8, core_hi = 1.5;
    const double ext_hi = std::min(std::max(core_hi, gs.x0 * 1.25), 0.5 * (upper + core_hi));
    std::size_t n_core = std::max<std::size_t>(std::size_t(gs.cluster_fraction * double(n)), 12);
    const double d_core = (core_hi - core_lo) / double(n_core - 1);
    std::size_t n_ext = 0;
    if (ext_hi > core_hi + d_core) {
        n_ext = std::max<std::size_t>(std::size_t(0.15 * double(n)), 4);
    }
    if (n_core + n_ext + 12 > n)
        throw std::invalid_argument("grid: n_points too small for the requested profile");
    std::size_t n_rest = n - n_core - n_ext;

    // split tail points by log extents
    double span_up = upper - (n_ext ? ext_hi : core_hi);
    double span_dn = core_lo - lower;
    double wu = std::log1p(span_up / d_core), wd = std::log1p(span_dn / d_core);
    std::size_t n_up = std::max<std::size_t>(std::size_t(double(n_rest) * wu / (wu + wd)), 4);
    if (n_up + 4 > n_rest) n_up = n_rest - 4;
    std::size_t n_dn = n_rest - n_up;

    std::vector<double> pts;
    pts.reserve(n);
    // lower tail: geometric from core_lo down to lower
    {
        double r = detail::geometric_ratio(d_core, span_dn, n_dn);
        std::vector<double> down;
        double x = core_lo, step = d_core;
        for (std::size_t i = 0; i < n_dn; ++i) {
            step *= r;
            x -= step;
            down.push_back(x);
        }
        down.back() = lower;
        for (auto it = down.rbegin(); it != down.rend(); ++it) pts.push_back(*it);
    }
    // core band (uniform)
    for (std::size_t i = 0; i < n_core; ++i) pts.push_back(core_lo + d_core * double(i));
    // extension band (uniform, coarser)
    if (n_ext) {
        double d_ext = (ext_hi - core_hi) / double(n_ext);
        for (std::size_t i = 1; i <= n_ext; ++i) pts.push_back(core_hi + d_ext * double(i));
    }
    // upper tail: geometric out to the bound
    {
        double start = pts.back();
        double d0 = n_ext ? (ext_hi - core_hi) / double(n_ext) : d_core;
        double r = detail::geometric_ratio(d0, upper - start, n_up);
        double x = start, step = d0;
        for (std::size_t i = 0; i < n_up; ++i) {
            step *= r;
            x += step;
            pts.push_back(x);
        }
        pts.back() = upper;
    }

    // anchor the threshold on the nearest core point
    std::size_t ti = 0;
    {
        double best = 1e300;
        for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
            if (std::abs(pts[i] - 1.0) < best) {
                best = std::abs(pts[i] - 1.0);
                ti = i;
            }
        }
        pts[ti] = 1.0;
        if (pts[ti - 1] >= 1.0 || pts[ti + 1] <= 1.0)
            throw std::invalid_argument("grid: n_points too small to host the threshold anchor");
    }

    std::size_t exp_lo = 0, exp_hi = 0;
    std::optional<double> cushion_level;
    if (gs.cushion_limit && *gs.cushion_limit > 0.0) {
        const double x_cl = 1.0 / (1.0 - *gs.cushion_limit);
        if (x_cl >= upper) throw std::invalid_argument("grid: cushion limit outside the grid");
        // nearest point above the threshold region to carry x_cl
        std::size_t j = ti + 1;
        while (j + 1 < pts.size() && pts[j + 1] < x_cl) ++j;
        if (j + 2 < pts.size() && std::abs(pts[j + 1] - x_cl) < std::abs(pts[j] - x_cl)) ++j;
        if (j >= pts.size() - 1)
            throw std::invalid_argument("grid: n_points too small to host the cushion anchor");
        // geometric section from 1 to x_cl
        for (std::size_t k = ti; k <= j; ++k)
            pts[k] = std::pow(x_cl, double(k - ti) / double(j - ti));
        pts[j] = x_cl;
        exp_lo = ti;
        exp_hi = j;
        cushion_level = x_cl;
        if (pts[j + 1] <= x_cl) throw std::invalid_argument("grid: cushion anchor breaks monotonicity");
    }

    std::vector<double> seps = default_separators(pts, exp_lo, exp_hi);
    seps[ti] = 1.0; // defeasance mass is read off the cumulative exactly
    return StateGrid(std::move(pts), std::move(seps), cushion_level);
}

} // namespace cppim
