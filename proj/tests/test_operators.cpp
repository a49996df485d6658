#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cppim/operators.hpp"

using namespace cppim;

namespace {

Matrix random_stochastic(Eigen::Index n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            m(i, j) = u(rng);
            s += m(i, j);
        }
        m.row(i) /= s;
    }
    return m;
}

} // namespace

TEST_CASE("fast exponentiation equals repeated multiplication") {
    Matrix m = random_stochastic(50, 7);
    Matrix direct = m;
    for (int i = 1; i < 5; ++i) direct = (direct * m).eval();
    Matrix fast = fast_power(m, 5);
    CHECK((fast - direct).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((fast_power(m, 1) - m).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fast_power(m, 0) - Matrix::Identity(50, 50)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("chain application: matvec and matmat agree") {
    Matrix m = random_stochastic(40, 3);
    Matrix p(40, 2);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 2.0);
    for (Eigen::Index i = 0; i < 40; ++i) {
        p(i, 0) = u(rng);
        p(i, 1) = std::max(1.0 - i * 0.05, 0.0);
    }
    std::vector<KernelRun> runs{{&m, 37}};
    Matrix v1 = apply_chain(runs, p, Strategy::MatVec);
    Matrix v2 = apply_chain(runs, p, Strategy::MatMat);
    CHECK((v1 - v2).cwiseAbs().maxCoeff() < 1e-12 * v1.cwiseAbs().maxCoeff() + 1e-14);

    // single application
    std::vector<KernelRun> one{{&m, 1}};
    CHECK((apply_chain(one, p, Strategy::Auto) - m * p).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("forward density and backward values agree") {
    Matrix m = random_stochastic(30, 5);
    std::vector<KernelRun> runs{{&m, 12}};
    Matrix p(30, 1);
    for (Eigen::Index i = 0; i < 30; ++i) p(i, 0) = std::sin(0.3 * double(i));
    Eigen::RowVectorXd start = Eigen::RowVectorXd::Zero(30);
    start(7) = 0.25;
    start(8) = 0.75;
    Matrix v = apply_chain(runs, p);
    double backward = 0.25 * v(7, 0) + 0.75 * v(8, 0);
    double forward = propagate_density(runs, start) * p.col(0);
    CHECK(backward == Catch::Approx(forward).epsilon(1e-12));
}

TEST_CASE("bucket plans") {
    auto mk = [](double var, double zc) {
        PeriodParams p;
        p.variance = var;
        p.terms.zc = zc;
        return p;
    };
    // constant parameters: one bucket at any tolerance
    std::vector<PeriodParams> flat(20, mk(0.01, 0.999));
    CHECK(plan_buckets(flat, 0.0).buckets.size() == 1);
    CHECK(plan_buckets(flat, 1.0).buckets.size() == 1);

    // distinct rates: tolerance 0 keeps them apart, large tolerance merges
    std::vector<PeriodParams> ramp;
    for (int i = 0; i < 10; ++i) ramp.push_back(mk(0.01, 0.999 - 1e-4 * i));
    CHECK(plan_buckets(ramp, 0.0).buckets.size() == 10);
    CHECK(plan_buckets(ramp, 0.5).buckets.size() < 4);
    CHECK(plan_buckets(ramp, 0.0).n_periods() == 10);

    // representatives: arithmetic mean variance, geometric mean discount
    std::vector<PeriodParams> two{mk(0.01, 0.99), mk(0.03, 0.97)};
    auto plan = plan_buckets(two, 10.0);
    REQUIRE(plan.buckets.size() == 1);
    CHECK(plan.buckets[0].variance == Catch::Approx(0.02));
    CHECK(plan.buckets[0].terms.zc == Catch::Approx(std::sqrt(0.99 * 0.97)));
    CHECK_THROWS(plan_buckets(two, -1.0));
}

TEST_CASE("semi-direct product") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto rnd = [&](Eigen::Index n) {
        AugmentedMatrix a;
        a.op.resize(n, n);
        a.f.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            a.f(i) = u(rng);
            for (Eigen::Index j = 0; j < n; ++j) a.op(i, j) = u(rng);
        }
        return a;
    };

    AugmentedMatrix a = rnd(10), b = rnd(10), c = rnd(10);

    // identity pair acts trivially
    auto id = AugmentedMatrix::identity(10);
    auto ida = semidirect_product(id, a);
    CHECK((ida.op - a.op).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((ida.f - a.f).cwiseAbs().maxCoeff() < 1e-15);

    // zero value streams reduce to the plain operator product
    AugmentedMatrix a0 = a, b0 = b;
    a0.f.setZero();
    b0.f.setZero();
    auto prod0 = semidirect_product(a0, b0);
    CHECK((prod0.op - a.op * b.op).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(prod0.f.cwiseAbs().maxCoeff() == 0.0);

    // associativity
    auto lhs = semidirect_product(semidirect_product(a, b), c);
    auto rhs = semidirect_product(a, semidirect_product(b, c));
    CHECK((lhs.op - rhs.op).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((lhs.f - rhs.f).cwiseAbs().maxCoeff() < 1e-12);

    // block embedding carries the same algebra
    Matrix blk = a.block() * b.block();
    auto ab = semidirect_product(a, b);
    CHECK((blk - ab.block()).cwiseAbs().maxCoeff() < 1e-13);

    // action on a function
    Vector gvec(10);
    for (Eigen::Index i = 0; i < 10; ++i) gvec(i) = u(rng);
    CHECK(((a.apply(gvec)) - (a.op * gvec + a.f)).cwiseAbs().maxCoeff() == 0.0);
}
