#include <catch_amalgamated.hpp>

#include <cmath>

#include "fracflow/barrier.hpp"

using namespace fracflow;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Profile1D logistic_profile()
{
    Profile1D p;
    ProfileGrid g;
    g.kind = ProfileGrid::Kind::Uniform;
    g.L = 40;
    g.N = 1601;
    p.xi = g.build();
    for (double x : p.xi) p.values.push_back(1 / (1 + std::exp(-x)));
    p.left = Tail::flat();
    p.right = Tail::flat();
    return p;
}

// d = 0.5 - x, extended; exactly affine on |d| <= rho
SignedDistanceField half_plane(int n, double rho)
{
    ScalarField raw = ScalarField::square(n, 1.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) raw(i, j) = 0.5 - raw.x(i);
    return extend_distance(raw, rho);
}

} // namespace

TEST_CASE("barrier configuration")
{
    SECTION("defaults resolve")
    {
        BarrierConfig c;
        c.resolve(1.0, 1.0 / 256);
        CHECK_THAT(c.delta, WithinRel(std::pow(0.02, 0.4), 1e-15));
    }
    SECTION("sigma = 0 is rejected")
    {
        BarrierConfig c;
        c.sigma = 0.0;
        CHECK_THROWS_AS(c.resolve(1.0, 1.0 / 256), Error);
    }
    SECTION("all violations are listed together")
    {
        BarrierConfig c;
        c.sigma = 0.05;   // sigma/alpha >= rho/2
        c.R = 0.4;        // > box/4
        c.epsilon = 0.01; // < 4h at n = 256
        try {
            c.resolve(1.0, 1.0 / 256);
            FAIL("expected an error");
        } catch (const Error& e) {
            const std::string m = e.what();
            CHECK_THAT(m, ContainsSubstring("rho/2"));
            CHECK_THAT(m, ContainsSubstring("quarter of the box"));
            CHECK_THAT(m, ContainsSubstring("four cells"));
        }
    }
}

TEST_CASE("mu plateaus and monotone blend")
{
    BarrierConfig c;
    c.epsilon = 0.04;
    c.resolve(1.0, 1.0 / 256);
    const double top = c.sigma / std::pow(c.delta, 0.5);
    CHECK(mu_value(0.0, c) == c.sigma);
    CHECK(mu_value(-c.delta, c) == c.sigma);
    CHECK(mu_value(2 * c.delta, c) == top);
    CHECK(mu_value(-5.0, c) == top);
    double prev = c.sigma;
    for (int k = 0; k <= 100; ++k) {
        const double v = mu_value(c.delta * (1 + k / 100.0), c);
        REQUIRE(v >= prev);
        prev = v;
    }
}

TEST_CASE("auxiliary fields on a half plane")
{
    const int n = 64;
    const auto d = half_plane(n, 0.3);
    const auto phi = logistic_profile();
    const auto well = DoubleWell::standard();
    BarrierConfig c;
    c.epsilon = 0.08;
    c.R = 0.2;
    c.rho = 0.3;
    c.sigma = 0.01;
    c.resolve(1.0, 1.0 / n);
    const auto aux = compute_aux(d, phi, well, c);

    for (std::size_t k = 0; k < aux.a_eps.size(); ++k)
        REQUIRE(aux.a_eps.data[k] == aux.b_eps.data[k] + aux.c_eps.data[k]);

    const int i0 = n / 2;  // d = 0 on this column
    REQUIRE(d.field(i0, 5) == 0.0);
    CHECK(aux.c_eps(i0, 5) == 0.0);  // W'(phi(0)) = W'(1/2) = 0

    // |grad d| = 1: only the regularisation survives in c_eps
    const double reg = std::pow(c.epsilon, 2 + 2 * 0.25 / 0.5);
    for (int i = 20; i <= 44; ++i)
        CHECK(std::abs(aux.c_eps(i, 7)) <= std::pow(c.epsilon, -0.5) * 0.25 * reg * 0.1);

    // affine d: the nonlinear part vanishes up to quadrature error, which is
    // small against the size of either term (I[phi(d/eps)] is O(eps^{-2s}))
    for (int i = 26; i <= 38; ++i) CHECK(std::abs(aux.b_eps(i, 9)) < 0.02);
    // and b_eps is constant along the front
    CHECK_THAT(aux.b_eps(i0 + 1, 3), WithinAbs(aux.b_eps(i0 + 1, 40), 1e-10));
}

TEST_CASE("assembly checks its ingredients")
{
    const auto d = half_plane(64, 0.3);
    AuxFields aux;
    aux.a_eps = ScalarField::square(32, 1.0);
    aux.mu = ScalarField::square(32, 1.0);
    BarrierConfig c;
    CHECK_THROWS_AS(assemble_barrier(d, logistic_profile(), logistic_profile(), aux, c), Error);

    // with mu = a the correction terms vanish and v = phi((d - sigma~)/eps)
    aux.a_eps = d.field.like<double>(0.7);
    aux.mu = d.field.like<double>(0.7);
    c.epsilon = 0.1;
    const auto phi = logistic_profile();
    const auto v = assemble_barrier(d, phi, phi, aux, c);
    for (std::size_t k = 0; k < v.size(); ++k)
        REQUIRE(v.data[k] == phi((d.field.data[k] - c.sigma_tilde()) / c.epsilon));
}
