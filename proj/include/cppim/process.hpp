#pragma once

// Underlying-model queries used by the kernel builder. For each model we need,
// over one rebalancing period, the cumulative P1(K) = P[R < K], the partial
// first moment P2(K) = E[R 1_{R<K}] and the partial second moment
// P3(K) = E[R^2 1_{R<K}] of the gross forward return R = F_{i+1}/F_i.
//
// Black-Scholes gives all three in closed form. The Kou jump-diffusion law is
// tabulated by FFT: the cumulative minus a Gaussian cumulative of matching
// mean and variance has a well-defined Fourier transform, recovered on a grid
// and interpolated with a cubic spline. P2 and P3 are cumulatives of
// exponentially tilted laws (characteristic exponent u -> psi(u - ij) -
// psi(-ij)); the j=1 tilt is exactly the parameter transform
// (gamma, lambda, eta) -> (gamma + sigma^2, lambda/(1 -+ eta), eta/(1 -+ eta)).

#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "cppim/math.hpp"

namespace cppim {

// ---------------------------------------------------------------------------
// Black-Scholes closed forms (forward measure: R lognormal with E[R] = 1)

inline void check_bs_args(double K, double sigma, double tau) {
    if (!(sigma > 0.0) || !(tau > 0.0)) throw std::invalid_argument("bs: sigma and tau must be > 0");
    (void)K;
}

inline double bs_p1(double K, double sigma, double tau) {
    check_bs_args(K, sigma, tau);
    if (K <= 0.0) return 0.0;
    double st = sigma * std::sqrt(tau);
    return norm_cdf((std::log(K) + 0.5 * sigma * sigma * tau) / st);
}

inline double bs_p2(double K, double sigma, double tau) {
    check_bs_args(K, sigma, tau);
    if (K <= 0.0) return 0.0;
    double st = sigma * std::sqrt(tau);
    return norm_cdf((std::log(K) - 0.5 * sigma * sigma * tau) / st);
}

inline double bs_p3(double K, double sigma, double tau) {
    check_bs_args(K, sigma, tau);
    if (K <= 0.0) return 0.0;
    double st = sigma * std::sqrt(tau);
    double d = (std::log(K) + 0.5 * sigma * sigma * tau) / st;
    return std::exp(sigma * sigma * tau) * norm_cdf(d - 2.0 * st);
}

// ---------------------------------------------------------------------------
// Kou jump-diffusion

struct BsParams {
    std::vector<double> sigma; // piecewise volatility per period, annualized

    void validate() const {
        if (sigma.empty()) throw std::invalid_argument("bs: no volatilities");
        for (double s : sigma)
            if (!(s > 0.0)) throw std::invalid_argument("bs: sigma must be > 0");
    }
};

struct KouParams {
    double sigma = 0.2;       // diffusive volatility
    double lambda_plus = 0.0; // upward jump intensity per year
    double lambda_minus = 0.0;
    double eta_plus = 0.0; // mean upward log-jump size
    double eta_minus = 0.0;
    // Drift of ln F. Unset (the normal case) means the martingale drift;
    // tilted laws produced by transformed() carry an explicit one.
    std::optional<double> drift;

    void validate() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("kou: sigma must be > 0");
        if (lambda_plus < 0.0 || lambda_minus < 0.0)
            throw std::invalid_argument("kou: jump intensities must be >= 0");
        if (lambda_plus > 0.0 && !(eta_plus > 0.0))
            throw std::invalid_argument("kou: eta_plus must be > 0");
        if (lambda_minus > 0.0 && !(eta_minus > 0.0))
            throw std::invalid_argument("kou: eta_minus must be > 0");
        if (lambda_plus > 0.0 && eta_plus >= 1.0)
            throw std::invalid_argument("kou: eta_plus must be < 1 (martingale bound)");
    }

    // Martingale drift unless an explicit override is present.
    double gamma() const {
        if (drift) return *drift;
        return kou_martingale_drift(sigma, lambda_plus, lambda_minus, eta_plus, eta_minus);
    }

    static double kou_martingale_drift(double sigma, double lp, double lm, double ep, double em) {
        if (lp > 0.0 && ep >= 1.0) throw std::invalid_argument("kou: eta_plus must be < 1");
        double g = -0.5 * sigma * sigma;
        if (lp > 0.0) g -= ep / (1.0 - ep) * lp;
        if (lm > 0.0) g += em / (1.0 + em) * lm;
        return g;
    }

    // Characteristic exponent of ln R per unit time.
    std::complex<double> psi(std::complex<double> u) const {
        const std::complex<double> i(0.0, 1.0);
        std::complex<double> v = i * gamma() * u - 0.5 * sigma * sigma * u * u;
        if (lambda_plus > 0.0) v += i * u * eta_plus / (1.0 - i * u * eta_plus) * lambda_plus;
        if (lambda_minus > 0.0) v -= i * u * eta_minus / (1.0 + i * u * eta_minus) * lambda_minus;
        return v;
    }

    std::complex<double> psi_prime(std::complex<double> u) const {
        const std::complex<double> i(0.0, 1.0);
        std::complex<double> v = i * gamma() - sigma * sigma * u;
        if (lambda_plus > 0.0) {
            auto d = 1.0 - i * u * eta_plus;
            v += i * eta_plus * lambda_plus / (d * d);
        }
        if (lambda_minus > 0.0) {
            auto d = 1.0 + i * u * eta_minus;
            v -= i * eta_minus * lambda_minus / (d * d);
        }
        return v;
    }

    std::complex<double> psi_second(std::complex<double> u) const {
        const std::complex<double> i(0.0, 1.0);
        std::complex<double> v = -sigma * sigma;
        if (lambda_plus > 0.0) {
            auto d = 1.0 - i * u * eta_plus;
            v -= 2.0 * eta_plus * eta_plus * lambda_plus / (d * d * d);
        }
        if (lambda_minus > 0.0) {
            auto d = 1.0 + i * u * eta_minus;
            v -= 2.0 * eta_minus * eta_minus * lambda_minus / (d * d * d);
        }
        return v;
    }

    // Parameter set whose cumulative is the conditional mean of the base set
    // (change of measure dQ'/dQ = R).
    KouParams transformed() const {
        KouParams t;
        t.sigma = sigma;
        t.lambda_plus = lambda_plus / (1.0 - eta_plus);
        t.lambda_minus = lambda_minus / (1.0 + eta_minus);
        t.eta_plus = eta_plus / (1.0 - eta_plus);
        t.eta_minus = eta_minus / (1.0 + eta_minus);
        t.drift = gamma() + sigma * sigma; // tilted law is not a martingale
        return t;
    }

    // Annualized variance of ln R.
    double total_variance_rate() const {
        return sigma * sigma + 2.0 * lambda_plus * eta_plus * eta_plus +
               2.0 * lambda_minus * eta_minus * eta_minus;
    }

    bool second_moment_finite() const { return lambda_plus == 0.0 || eta_plus < 0.5; }
};

inline double kou_martingale_drift(const KouParams& p) {
    if (p.lambda_plus > 0.0 && p.eta_plus >= 1.0)
        throw std::invalid_argument("kou: eta_plus must be < 1 (martingale bound)");
    return p.gamma();
}

inline std::complex<double> kou_char_exponent(std::complex<double> u, const KouParams& p) {
    return p.psi(u);
}

// ---------------------------------------------------------------------------
// Tabulated cumulative: Gaussian reference + FFT-recovered spline correction.

struct LawTabulation {
    double mu = 0.0, sd = 1.0; // Gaussian reference (matches law mean/stddev)
    double x_lo = 0.0, x_hi = 0.0;
    UniformCubicSpline correction;

    double cdf(double x) const {
        double c = norm_cdf((x - mu) / sd);
        if (x > x_lo && x < x_hi) c += correction(x);
        return std::clamp(c, 0.0, 1.0);
    }
};

namespace detail {

// Cumulative of a law given by characteristic exponent psi_t (per unit time)
// over horizon tau, with exact mean/variance for the Gaussian reference.
template <class Psi>
LawTabulation tabulate_cumulative(Psi&& psi_t, double tau, double mean, double var, double half_width,
                                  int n_fft) {
    if (n_fft < (1 << 10) || (n_fft & (n_fft - 1)) != 0)
        throw std::invalid_argument("law tabulation: n_fft must be a power of two >= 1024");
    const double span = 2.0 * half_width;
    const double dx = span / n_fft;
    const double x_min = mean - half_width;
    const double sd = std::sqrt(var);
    const std::complex<double> i(0.0, 1.0);

    std::vector<std::complex<double>> a(n_fft);
    a[0] = 0.0; // mean and variance matched => integrand has a removable zero
    for (int k = 1; k < n_fft; ++k) {
        int kk = (k < n_fft / 2) ? k : k - n_fft;
        double u = 2.0 * M_PI * kk / span;
        std::complex<double> phi = std::exp(psi_t(u) * tau);
        std::complex<double> phi_g = std::exp(i * u * mean - 0.5 * u * u * var);
        std::complex<double> dhat = i * (phi - phi_g) / u;
        a[k] = dhat * std::exp(-i * u * x_min);
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> out(n_fft);
    fft.fwd(out, a);

    std::vector<double> d(n_fft);
    for (int j = 0; j < n_fft; ++j) d[j] = out[j].real() / span;

    LawTabulation tab;
    tab.mu = mean;
    tab.sd = sd;
    tab.x_lo = x_min;
    tab.x_hi = x_min + dx * (n_fft - 1);
    tab.correction = UniformCubicSpline(x_min, dx, std::move(d));
    return tab;
}

} // namespace detail

// ---------------------------------------------------------------------------
// ReturnLaw: the only model interface the kernel builder sees.

class ReturnLaw {
public:
    enum class Model { BlackScholes, Kou };

    static ReturnLaw black_scholes(double sigma, double tau) {
        if (!(sigma > 0.0) || !(tau > 0.0))
            throw std::invalid_argument("return law: sigma and tau must be > 0");
        ReturnLaw law;
        law.model_ = Model::BlackScholes;
        law.tau_ = tau;
        law.sigma_ = sigma;
        law.m2_ = std::exp(sigma * sigma * tau);
        return law;
    }

    static ReturnLaw kou(const KouParams& p, double tau, int n_fft = 1 << 14,
                         double width_sd = 12.0);

    Model model() const { return model_; }
    double tau() const { return tau_; }

    // P[R < K]
    double p1(double K) const {
        if (K <= 0.0) return 0.0;
        if (model_ == Model::BlackScholes) return bs_p1(K, sigma_, tau_);
        return tab_[0].cdf(std::log(K));
    }

    // E[R 1_{R<K}]; tends to 1 as K -> infinity (martingale).
    double p2(double K) const {
        if (K <= 0.0) return 0.0;
        if (model_ == Model::BlackScholes) return bs_p2(K, sigma_, tau_);
        return tab_[1].cdf(std::log(K));
    }

    // E[R^2 1_{R<K}]; tends to m2().
    double p3(double K) const {
        if (K <= 0.0) return 0.0;
        if (model_ == Model::BlackScholes) return bs_p3(K, sigma_, tau_);
        if (!truncated_p3_.empty()) return truncated_p3_lookup(std::log(K));
        return m2_ * tab_[2].cdf(std::log(K));
    }

    // E[R^2] (truncated-domain estimate when the true moment diverges).
    double m2() const { return m2_; }

    // Set when eta_plus >= 1/2: the second moment of the price process
    // diverges and m2()/p3() fall back to truncated-domain values.
    bool second_moment_warning() const { return warn_m2_; }

private:
    double truncated_p3_lookup(double x) const {
        const auto& t = truncated_p3_;
        if (x <= trunc_x0_) return 0.0;
        double pos = (x - trunc_x0_) / trunc_dx_;
        if (pos >= double(t.size() - 1)) return t.back();
        std::size_t j = std::size_t(pos);
        double w = pos - double(j);
        return t[j] * (1.0 - w) + t[j + 1] * w;
    }

    Model model_ = Model::BlackScholes;
    double tau_ = 0.0;
    double sigma_ = 0.0; // BS only
    double m2_ = 1.0;
    bool warn_m2_ = false;
    LawTabulation tab_[3]; // base, tilt-1 (P2), tilt-2 (P3)
    std::vector<double> truncated_p3_;
    double trunc_x0_ = 0.0, trunc_dx_ = 1.0;

    friend ReturnLaw kou_tabulate_law(const KouParams&, double, int, double);
};

// Builds the Kou return law over one period. half-width rule: at least
// width_sd total standard deviations, widened so the exponential jump tails
// carry < ~1e-12 mass outside the domain (Gaussian 12-sd reasoning does not
// cover exponential tails).
inline ReturnLaw kou_tabulate_law(const KouParams& p, double tau, int n_fft = 1 << 14,
                                  double width_sd = 12.0) {
    p.validate();
    if (!(tau > 0.0)) throw std::invalid_argument("kou law: tau must be > 0");
    if (width_sd < 12.0) throw std::invalid_argument("kou law: domain must cover >= 12 std devs");

    ReturnLaw law;
    law.model_ = ReturnLaw::Model::Kou;
    law.tau_ = tau;

    const std::complex<double> i(0.0, 1.0);
    auto tail_width = [&](double lam, double eta) {
        if (lam <= 0.0 || eta <= 0.0) return 0.0;
        double mass = std::max(lam * tau, 1e-8);
        return eta * std::log(mass * 1e12);
    };

    for (int j = 0; j <= 2; ++j) {
        if (j == 2 && !p.second_moment_finite()) break;
        std::complex<double> shift(0.0, -double(j));
        std::complex<double> psi_shift = p.psi(shift); // real for valid tilts
        auto psi_j = [&](double u) { return p.psi(std::complex<double>(u, -double(j))) - psi_shift; };
        double mean = (-i * p.psi_prime(shift)).real() * tau;
        double var = (-p.psi_second(shift)).real() * tau;
        // tilted jump scales for the tail-coverage rule
        double ep = (1.0 - j * p.eta_plus > 0.0) ? p.eta_plus / (1.0 - j * p.eta_plus) : p.eta_plus;
        double em = p.eta_minus / (1.0 + j * p.eta_minus);
        double lp = (1.0 - j * p.eta_plus > 0.0) ? p.lambda_plus / (1.0 - j * p.eta_plus) : p.lambda_plus;
        double lm = p.lambda_minus / (1.0 + j * p.eta_minus);
        double hw = std::max({width_sd * std::sqrt(var), tail_width(lp, ep), tail_width(lm, em), 0.25});
        law.tab_[j] = detail::tabulate_cumulative(psi_j, tau, mean, var, hw, n_fft);
        if (j == 2) law.m2_ = std::exp(psi_shift.real() * tau);
    }

    if (!p.second_moment_finite()) {
        law.warn_m2_ = true;
        // Truncated-domain partial second moment from the base tabulation.
        const auto& base = law.tab_[0];
        const int n = 4096;
        double x0 = base.x_lo, x1 = base.x_hi;
        double dx = (x1 - x0) / (n - 1);
        std::vector<double> s(n, 0.0);
        double prev_c = base.cdf(x0);
        for (int k = 1; k < n; ++k) {
            double xa = x0 + (k - 1) * dx, xb = x0 + k * dx;
            double c = base.cdf(xb);
            double mid = 0.5 * (xa + xb);
            s[k] = s[k - 1] + std::exp(2.0 * mid) * std::max(c - prev_c, 0.0);
            prev_c = c;
        }
        law.m2_ = s.back();
        law.truncated_p3_ = std::move(s);
        law.trunc_x0_ = x0;
        law.trunc_dx_ = dx;
    }
    return law;
}

inline ReturnLaw ReturnLaw::kou(const KouParams& p, double tau, int n_fft, double width_sd) {
    return kou_tabulate_law(p, tau, n_fft, width_sd);
}

// Convenience wrappers mirroring the generic law queries.
inline double law_p1(const ReturnLaw& law, double K) { return law.p1(K); }
inline double law_p2(const ReturnLaw& law, double K) { return law.p2(K); }

} // namespace cppim
