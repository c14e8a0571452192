#include <catch_amalgamated.hpp>

#include <cmath>

#include <boost/math/special_functions/beta.hpp>

#include "fracflow/fmcf.hpp"

using namespace fracflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kOmega = std::pow(2.0, -0.5) * boost::math::beta(0.5, 0.25) / 0.5;

FmcParams params()
{
    FmcParams p;
    p.c0 = 1.0;  // only scales time
    p.omega = kOmega;
    p.move_fraction = 0.5;
    return p;
}

} // namespace

TEST_CASE("flow parameters are validated")
{
    FmcParams p = params();
    p.c0 = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = params();
    p.cfl = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
    CHECK_NOTHROW(params().validate());
}

TEST_CASE("one step of a circle follows the curvature law")
{
    const int n = 256;
    const double h = 1.0 / n, r0 = 0.3;
    const Vec2 c{0.5 + 0.25 * h, 0.5 + 0.125 * h};
    FlowState st = make_flow(signed_distance_circle(n, 1.0, c, r0, 0.0, 6 * h), params());
    const double before = mean_radius(extract_front(st.u, 0.0), c);
    double moved = 0.0, elapsed = 0.0;
    for (int k = 0; k < 4; ++k) elapsed += step(st, 0.0);
    moved = before - mean_radius(extract_front(st.u, 0.0), c);
    // dr/dt = -c0 omega r^{-2s}
    const double expected = kOmega * std::pow(r0, -0.5) * elapsed;
    CHECK(moved > 0);
    CHECK_THAT(moved, WithinRel(expected, 0.05));
    CHECK(st.steps == 4);
    CHECK(redistance_defect(st) < 0.05);
}

TEST_CASE("a step above the CFL bound is refused")
{
    const int n = 128;
    const double h = 1.0 / n;
    FlowState st = make_flow(signed_distance_circle(n, 1.0, {0.5, 0.5}, 0.3, 0.0, 6 * h), params());
    CHECK_THROWS_AS(step(st, 1.0), Error);
}

TEST_CASE("fronts below resolution count as extinct")
{
    const int n = 128;
    const double h = 1.0 / n;
    FlowState st = make_flow(signed_distance_circle(n, 1.0, {0.5, 0.5}, 5 * h, 0.0, 3 * h), params());
    CHECK(step(st, 0.0) == 0.0);
    CHECK(st.status == FlowStatus::Vanished);
}

TEST_CASE("a front crossing the box edge is reported")
{
    const int n = 64;
    ScalarField u = ScalarField::square(n, 1.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) u(i, j) = std::clamp(0.5 - u.x(i), -0.2, 0.2);
    SignedDistanceField d;
    d.field = u;
    d.rho = 0.1;
    FlowState st = make_flow(d, params());
    CHECK_THROWS_AS(step(st, 0.0), Error);
}

TEST_CASE("nested circles stay nested")
{
    const int n = 128;
    const double h = 1.0 / n;
    const Vec2 c{0.5 + 0.25 * h, 0.5 + 0.125 * h};
    FlowState a = make_flow(signed_distance_circle(n, 1.0, c, 0.2, 0.0, 6 * h), params());
    FlowState b = make_flow(signed_distance_circle(n, 1.0, c, 0.3, 0.0, 6 * h), params());
    double ra = 0.2, rb = 0.3;
    for (int k = 0; k < 30; ++k) {
        // the inner, faster circle dictates the common step
        evaluate_front_curvature(a);
        const double dt = accuracy_dt(a);
        step(a, dt);
        step(b, dt);
        const double na = mean_radius(extract_front(a.u, 0.0), c), nb = mean_radius(extract_front(b.u, 0.0), c);
        REQUIRE(na < ra);
        REQUIRE(nb < rb);
        REQUIRE(na < nb);
        // the inner one moves faster
        CHECK(ra - na > rb - nb);
        ra = na;
        rb = nb;
    }
}

TEST_CASE("extinction-law fit on exact data")
{
    const double s = 0.25, r0 = 0.4, c0 = 2.0, q = 1.5;
    std::vector<RadiusSample> tab;
    const double T = std::pow(r0, q) / (q * c0 * kOmega);
    for (int k = 0; k < 20; ++k) {
        const double t = 0.04 * k * T;
        const double r = std::pow(std::pow(r0, q) - q * c0 * kOmega * t, 1 / q);
        tab.push_back({t, r, r});
    }
    const auto f = fit_radius_law(tab, s, r0, c0, kOmega);
    CHECK_THAT(f.r2, WithinAbs(1.0, 1e-12));
    CHECK_THAT(f.t_extinction, WithinRel(T, 1e-10));
    CHECK_THAT(f.t_extinction_exact, WithinRel(T, 1e-14));
}

TEST_CASE("velocity function F*")
{
    const FmcParams p = params();
    const Vec2 c{0.5, 0.5};
    const double r = 0.3;
    auto disc = [&](Vec2 y) { return norm(y - c) < r; };
    auto half = [&](Vec2 y) { return y.x < 0.5; };
    const Vec2 x{0.8, 0.5};
    CHECK(f_star_eval(x, {0, 0}, disc, p) == 0.0);
    // on the circle F* = -c0 kappa |p| = c0 omega r^{-2s} |p|, for either normal orientation
    CHECK_THAT(f_star_eval(x, {-1, 0}, disc, p), WithinRel(kOmega * std::pow(r, -0.5), 1e-3));
    CHECK_THAT(f_star_eval(x, {1, 0}, disc, p), WithinRel(kOmega * std::pow(r, -0.5), 1e-3));
    CHECK_THAT(f_star_eval(x, {-3, 0}, disc, p), WithinRel(3 * f_star_eval(x, {-1, 0}, disc, p), 1e-12));
    // flat boundary: no motion
    CHECK_THAT(f_star_eval({0.5, 0.5}, {-1, 0}, half, p), WithinAbs(0.0, 1e-3));
}
