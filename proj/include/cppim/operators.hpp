#pragma once

// Composition of period matrices into whole-life kernels: matrix-vector
// backward propagation, fast matrix exponentiation for stationary runs,
// piecewise-constant parameter bucketing, and the semi-direct product
// carrying coupon value streams.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cppim/kernel.hpp"

namespace cppim {

enum class Strategy { Auto, MatVec, MatMat };

// M^n by binary exponentiation, O(log n) multiplications.
inline Matrix fast_power(const Matrix& m, long n) {
    if (n < 0) throw std::invalid_argument("fast_power: negative exponent");
    Matrix result = Matrix::Identity(m.rows(), m.cols());
    if (n == 0) return result;
    Matrix base = m;
    long k = n;
    while (true) {
        if (k & 1) result = (result * base).eval();
        k >>= 1;
        if (k == 0) break;
        base = (base * base).eval();
    }
    return result;
}

// One stationary run: count applications of the same matrix.
struct KernelRun {
    const Matrix* m = nullptr;
    long count = 1;
};

inline long flops_matvec(long n, long rows, long cols) { return n * rows * rows * cols; }
inline long flops_matmat(long n, long rows) {
    long mults = 0;
    while (n > 0) {
        mults += 1 + (n & 1);
        n >>= 1;
    }
    return mults * rows * rows * rows;
}

// Applies the chain K = run_0 run_1 ... run_{r-1} to a payoff block,
// backward: v <- M v, innermost run last. Columns are independent payoffs.
inline Matrix apply_chain(const std::vector<KernelRun>& runs, Matrix payoff,
                          Strategy strategy = Strategy::Auto) {
    for (auto it = runs.rbegin(); it != runs.rend(); ++it) {
        const Matrix& m = *it->m;
        if (m.cols() != payoff.rows()) throw std::invalid_argument("compose: dimension mismatch");
        bool use_matmat = false;
        if (strategy == Strategy::MatMat)
            use_matmat = it->count > 1;
        else if (strategy == Strategy::Auto)
            use_matmat = flops_matmat(it->count, m.rows()) <
                         flops_matvec(it->count, m.rows(), payoff.cols());
        if (use_matmat) {
            payoff = (fast_power(m, it->count) * payoff).eval();
        } else {
            for (long i = 0; i < it->count; ++i) payoff = (m * payoff).eval();
        }
    }
    return payoff;
}

// Forward propagation of a start distribution (row vector) through the chain.
inline Eigen::RowVectorXd propagate_density(const std::vector<KernelRun>& runs,
                                            Eigen::RowVectorXd start) {
    for (const auto& run : runs) {
        const Matrix& m = *run.m;
        if (start.cols() != m.rows()) throw std::invalid_argument("compose: dimension mismatch");
        for (long i = 0; i < run.count; ++i) start = (start * m).eval();
    }
    return start;
}

// ---------------------------------------------------------------------------
// Piecewise-constant parameter bucketing

struct PeriodParams {
    KernelTerms terms;
    double variance = 0.0; // risky-asset variance over the period
};

struct Bucket {
    KernelTerms terms;
    double variance = 0.0;
    long count = 0;
    std::size_t first = 0; // index of the first period in the bucket
};

struct CompositionPlan {
    std::vector<Bucket> buckets;
    double tolerance = 0.0;
    long n_periods() const {
        long n = 0;
        for (const auto& b : buckets) n += b.count;
        return n;
    }
};

// Greedy grouping of consecutive periods whose variance and rates stay
// within the relative tolerance of the bucket head. Representatives:
// arithmetic mean for the variance, geometric mean for discount-like
// factors, so products over the bucket stay exact.
inline CompositionPlan plan_buckets(const std::vector<PeriodParams>& periods, double tolerance) {
    if (tolerance < 0.0) throw std::invalid_argument("buckets: tolerance must be >= 0");
    CompositionPlan plan;
    plan.tolerance = tolerance;

    // tolerance 0 still merges periods identical up to FP rounding
    const double tol_eff = std::max(tolerance, 1e-13);
    auto close = [&](double a, double head) {
        return std::abs(a - head) <= tol_eff * std::max(std::abs(head), 1e-4);
    };
    auto key_match = [&](const PeriodParams& p, const PeriodParams& head) {
        return close(p.variance, head.variance) && close(p.terms.tau, head.terms.tau) &&
               close(p.terms.zc, head.terms.zc) && close(p.terms.e_msH, head.terms.e_msH) &&
               close(p.terms.e_sp, head.terms.e_sp) && close(p.terms.e_sm, head.terms.e_sm) &&
               close(p.terms.fee_prop, head.terms.fee_prop) &&
               close(p.terms.fee_def, head.terms.fee_def) &&
               close(p.terms.fee_risky, head.terms.fee_risky) &&
               close(p.terms.fee_fixed_over_h, head.terms.fee_fixed_over_h) &&
               p.terms.spot_ratio == head.terms.spot_ratio;
    };

    std::size_t i = 0;
    while (i < periods.size()) {
        std::size_t j = i + 1;
        while (j < periods.size() && key_match(periods[j], periods[i])) ++j;

        Bucket b;
        b.first = i;
        b.count = long(j - i);
        double var = 0.0, tau = 0.0;
        double lzc = 0.0, lmsH = 0.0, lsp = 0.0, lsm = 0.0;
        double fp = 0.0, fd = 0.0, fr = 0.0, ff = 0.0;
        for (std::size_t k = i; k < j; ++k) {
            const auto& t = periods[k].terms;
            var += periods[k].variance;
            tau += t.tau;
            lzc += std::log(t.zc);
            lmsH += std::log(t.e_msH);
            lsp += std::log(t.e_sp);
            lsm += std::log(t.e_sm);
            fp += t.fee_prop;
            fd += t.fee_def;
            fr += t.fee_risky;
            ff += t.fee_fixed_over_h;
        }
        double inv = 1.0 / double(b.count);
        b.variance = var * inv;
        b.terms = periods[i].terms;
        b.terms.tau = tau * inv;
        b.terms.zc = std::exp(lzc * inv);
        b.terms.e_msH = std::exp(lmsH * inv);
        b.terms.e_sp = std::exp(lsp * inv);
        b.terms.e_sm = std::exp(lsm * inv);
        b.terms.fee_prop = fp * inv;
        b.terms.fee_def = fd * inv;
        b.terms.fee_risky = fr * inv;
        b.terms.fee_fixed_over_h = ff * inv;
        plan.buckets.push_back(b);
        i = j;
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Semi-direct product: pairs (operator, value stream)

struct AugmentedMatrix {
    Matrix op;
    Vector f;

    static AugmentedMatrix identity(Eigen::Index n) {
        return {Matrix::Identity(n, n), Vector::Zero(n)};
    }

    // action on a payoff: O g + f
    Vector apply(const Vector& g) const {
        if (op.cols() != g.size()) throw std::invalid_argument("augmented: dimension mismatch");
        return op * g + f;
    }

    // (N+1)x(N+1) block embedding with bottom row (0...0, 1)
    Matrix block() const {
        Eigen::Index n = op.rows();
        Matrix b = Matrix::Zero(n + 1, n + 1);
        b.topLeftCorner(n, n) = op;
        b.topRightCorner(n, 1) = f;
        b(n, n) = 1.0;
        return b;
    }
};

// (O1, f1)(O2, f2) = (O1 O2, O1 f2 + f1)
inline AugmentedMatrix semidirect_product(const AugmentedMatrix& a, const AugmentedMatrix& b) {
    if (a.op.cols() != b.op.rows()) throw std::invalid_argument("augmented: dimension mismatch");
    return {a.op * b.op, a.op * b.f + a.f};
}

} // namespace cppim
