#pragma once

// Small numerical toolbox shared by the pricing modules: standard normal
// distribution, Moro inverse CDF, natural cubic splines, compensated sums.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cppim {

inline double norm_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865476);
}

// Moro (1995) inverse normal CDF. |error| < 3e-9 in the central region,
// < 1e-7 in the tails; good enough for Monte-Carlo draws.
inline double norm_inv(double u) {
    const double eps = 1e-15;
    u = std::clamp(u, eps, 1.0 - eps);
    double x = u - 0.5;
    if (std::abs(x) < 0.42) {
        double r = x * x;
        double num = 2.50662823884 +
                     r * (-18.61500062529 + r * (41.39119773534 + r * -25.44106049637));
        double den = 1.0 +
                     r * (-8.47351093090 +
                          r * (23.08336743743 + r * (-21.06224101826 + r * 3.13082909833)));
        return x * num / den;
    }
    double r = (x < 0.0) ? u : 1.0 - u;
    r = std::log(-std::log(r));
    double z = 0.3374754822726147 +
               r * (0.9761690190917186 +
                    r * (0.1607979714918209 +
                         r * (0.0276438810333863 +
                              r * (0.0038405729373609 +
                                   r * (0.0003951896511919 +
                                        r * (0.0000321767881768 +
                                             r * (0.0000002888167364 + r * 0.0000003960315187)))))));
    return (x < 0.0) ? -z : z;
}

// z with P[Z > z] = eps for a standard normal, valid into the extreme tail
// where the Moro inverse saturates. Asymptotic start, Newton-polished on
// log of the Mills-ratio expansion.
inline double norm_upper_quantile(double eps) {
    if (eps >= 0.5) return 0.0;
    if (eps > 1e-9) return -norm_inv(eps);
    double L = -std::log(eps);
    double z = std::sqrt(std::max(2.0 * L - std::log(2.0 * L) - std::log(2.0 * M_PI), 1.0));
    for (int it = 0; it < 6; ++it) {
        double z2 = z * z;
        double tail = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2);
        double f = -0.5 * z2 - 0.5 * std::log(2.0 * M_PI) - std::log(z) + std::log(tail) + L;
        double fp = -z - 1.0 / z;
        z -= f / fp;
    }
    return z;
}

// Natural cubic spline on a uniform x-grid. Used to interpolate the
// FFT-recovered cumulative corrections between grid nodes.
class UniformCubicSpline {
public:
    UniformCubicSpline() = default;

    UniformCubicSpline(double x0, double dx, std::vector<double> y) : x0_(x0), dx_(dx), y_(std::move(y)) {
        const std::size_t n = y_.size();
        if (n < 3) throw std::invalid_argument("spline needs at least 3 nodes");
        // Natural spline second derivatives: tridiagonal system
        //   m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]) / dx^2
        // with m[0] = m[n-1] = 0, solved by the Thomas algorithm.
        m_.assign(n, 0.0);
        if (n == 3) {
            m_[1] = 6.0 * (y_[2] - 2.0 * y_[1] + y_[0]) / (dx_ * dx_) / 4.0;
            return;
        }
        std::vector<double> diag(n, 4.0), rhs(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i)
            rhs[i] = 6.0 * (y_[i + 1] - 2.0 * y_[i] + y_[i - 1]) / (dx_ * dx_);
        for (std::size_t i = 2; i + 1 < n; ++i) {
            double w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        m_[n - 2] = rhs[n - 2] / diag[n - 2];
        for (std::size_t i = n - 3; i >= 1; --i) {
            m_[i] = (rhs[i] - m_[i + 1]) / diag[i];
            if (i == 1) break;
        }
    }

    double operator()(double x) const {
        const std::size_t n = y_.size();
        double t = (x - x0_) / dx_;
        if (t <= 0.0) return y_.front();
        if (t >= double(n - 1)) return y_.back();
        std::size_t i = std::min<std::size_t>(std::size_t(t), n - 2);
        double a = (x0_ + double(i + 1) * dx_ - x) / dx_;
        double b = 1.0 - a;
        return a * y_[i] + b * y_[i + 1] +
               ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * dx_ * dx_ / 6.0;
    }

    double node(std::size_t i) const { return y_[i]; }
    std::size_t size() const { return y_.size(); }

private:
    double x0_ = 0.0, dx_ = 1.0;
    std::vector<double> y_, m_;
};

// Kahan-compensated accumulator; keeps Monte-Carlo sums deterministic and
// accurate independent of path count.
class KahanSum {
public:
    void add(double v) {
        double y = v - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0, c_ = 0.0;
};

// Secant iteration for 1-d root finding (used by the variance-control scale
// solve, where the objective is smooth and nearly linear around the root).
template <class F>
double solve_secant(F&& f, double a, double b, double tol, int max_iter = 60) {
    double fa = f(a), fb = f(b);
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(fb) < tol) return b;
        double denom = fb - fa;
        double c = (std::abs(denom) > 1e-300) ? b - fb * (b - a) / denom : 0.5 * (a + b);
        a = b;
        fa = fb;
        b = c;
        fb = f(b);
    }
    return b;
}

} // namespace cppim
