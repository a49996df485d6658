#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cppim/grid.hpp"

using namespace cppim;

TEST_CASE("default separators: midpoints and geometric section") {
    auto s = default_separators({0.0, 1.0, 2.0});
    REQUIRE(s.size() == 2);
    CHECK(s[0] == Catch::Approx(0.5));
    CHECK(s[1] == Catch::Approx(1.5));

    // geometric midpoints on an exponential section
    auto sg = default_separators({1.0, 1.05, 1.1025}, 0, 2);
    CHECK(sg[1] == Catch::Approx(1.05 * std::sqrt(1.05)).epsilon(1e-12));

    CHECK_THROWS(default_separators({1.0}));
}

TEST_CASE("grid construction: bounds, anchors, interleaving") {
    GridSpec gs;
    gs.n_points = 500;
    gs.eps = 1e-8;
    gs.x0 = std::exp(0.05 * 3647.0 / 365.0);
    gs.w_max = 4.0;
    gs.sigma_atm = 0.5;
    gs.horizon = 3647.0 / 365.0;
    StateGrid grid = build_grid(gs);

    REQUIRE(grid.size() == 500);
    const auto& p = grid.points();
    const auto& s = grid.separators();
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        CHECK(p[i] < p[i + 1]);
        CHECK(p[i] <= s[i]);
        CHECK(s[i] <= p[i + 1]);
    }
    // threshold is a grid point with the separator above it at exactly 1
    CHECK(p[grid.threshold_index()] == 1.0);
    CHECK(grid.threshold_separator_aligned());

    // lognormal-quantile upper bound is huge for the vanilla benchmark,
    // lower bound is (1 - w_max) times it
    CHECK(p.back() > 100.0);
    CHECK(p.front() == Catch::Approx((1.0 - 4.0) * p.back()).epsilon(1e-9));

    // about 40% of the points land in [0.8, 1.5]
    int in_band = 0;
    for (double x : p) in_band += (x >= 0.8 && x <= 1.5);
    CHECK(double(in_band) / double(p.size()) == Catch::Approx(0.4).margin(0.05));
}

TEST_CASE("grid hosts the cushion-limit level with a geometric section") {
    GridSpec gs;
    gs.n_points = 300;
    gs.x0 = 1.6;
    gs.w_max = 4.0;
    gs.sigma_atm = 0.2;
    gs.horizon = 10.0;
    gs.cushion_limit = 0.05;
    StateGrid grid = build_grid(gs);

    REQUIRE(grid.cushion_index());
    double x_cl = 1.0 / (1.0 - 0.05);
    CHECK(grid.point(*grid.cushion_index()) == Catch::Approx(x_cl).margin(1e-14));
    // section between threshold and cushion limit is geometric
    std::size_t ti = grid.threshold_index(), ci = *grid.cushion_index();
    REQUIRE(ci > ti + 1);
    double ratio = grid.point(ti + 1) / grid.point(ti);
    for (std::size_t k = ti + 1; k < ci; ++k)
        CHECK(grid.point(k + 1) / grid.point(k) == Catch::Approx(ratio).epsilon(1e-9));
}

TEST_CASE("grid: w_max = 1 keeps the lower bound at zero") {
    GridSpec gs;
    gs.n_points = 200;
    gs.x0 = 1.6;
    gs.w_max = 1.0;
    gs.sigma_atm = 0.2;
    gs.horizon = 10.0;
    StateGrid grid = build_grid(gs);
    CHECK(grid.points().front() >= 0.0);
    CHECK(grid.points().front() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("grid rejects bad sizing") {
    GridSpec gs;
    gs.n_points = 20;
    CHECK_THROWS(build_grid(gs));
    gs.n_points = 100;
    gs.eps = 0.5;
    CHECK_THROWS(build_grid(gs));
}

TEST_CASE("state grid validation") {
    CHECK_THROWS(StateGrid({1.0}, {}));                       // degenerate
    CHECK_THROWS(StateGrid({0.0, 2.0}, {1.0}));               // threshold missing
    CHECK_THROWS(StateGrid({0.0, 1.0, 2.0}, {1.5, 0.5}));     // separators not interleaved
    StateGrid g({0.0, 1.0, 2.0}, {0.5, 1.5});
    CHECK(g.threshold_index() == 1);
    CHECK_FALSE(g.threshold_separator_aligned());
    CHECK(g.bin_of(0.7) == 1);
    CHECK(g.bin_of(-3.0) == 0);
    CHECK(g.bin_of(5.0) == 2);
    auto sp = g.split(1.25);
    CHECK(sp.i == 1);
    CHECK(sp.w_upper == Catch::Approx(0.25));
}
