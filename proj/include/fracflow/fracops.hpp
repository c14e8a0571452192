#pragma once

// Singular quadrature for I_n^s u(x) = \int (u(x+z) - u(x)) |z|^{-n-2s} dz.
//
// 1D: the samples are interpolated by the cubic Hermite spline of Profile1D and
// the kernel is integrated exactly against each spline piece (closed form on the
// two pieces touching the target node, graded Gauss-Legendre elsewhere), so the
// operator is an affine map of the samples.  The declared tails supply the far
// field in closed form or by 1D quadrature.
//
// nD (n = 2): exact per-cell integrals of the kernel, optional lattice
// periodization, optional smooth near-field cutoff.  Fields are applied either
// point by point or by FFT convolution on the grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "core.hpp"
#include "fft.hpp"
#include "profile1d.hpp"

namespace fracflow {

/// |S^{n-1}|, surface measure of the unit sphere in R^n (|S^0| = 2).
inline double sphere_area(int n)
{
    return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n);
}

/// Beta/Gamma form of the slicing constant, used only as a cross-check.
inline double C_ns_closed_form(const FracOrder& o)
{
    if (o.n == 1) return 1.0;
    return std::pow(M_PI, 0.5 * (o.n - 1)) * std::tgamma(0.5 + o.s) / std::tgamma(0.5 * o.n + o.s);
}

/// The constant C_{n,s} = \int_{R^{n-1}} (|z|^2+1)^{-(n+2s)/2} dz.
inline double compute_C_ns(const FracOrder& order)
{
    order.validate();
    if (order.n == 1) return 1.0;
    const int n = order.n;
    const double s = order.s;
    const double q = 0.5 * (n + 2 * s);
    auto f = [&](double r) { return std::pow(r, n - 2) * std::pow(1.0 + r * r, -q); };

    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double cut = 16.0;
    const std::array<double, 5> knots{0.0, 1.0, 4.0, 8.0, cut};
    double core = 0.0, err = 0.0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        double e = 0.0;
        core += GK::integrate(f, knots[k], knots[k + 1], 15, 1e-15, &e);
        err += e;
    }
    // \int_cut^inf r^{n-2}(1+r^2)^{-q} dr, binomial series in r^{-2}
    double tail = 0.0, coef = 1.0;
    for (int k = 0; k < 200; ++k) {
        const double term = coef * std::pow(cut, -1.0 - 2 * s - 2.0 * k) / (1.0 + 2 * s + 2.0 * k);
        tail += term;
        if (std::abs(term) < 1e-20 * std::abs(tail)) break;
        coef *= -(q + k) / (k + 1.0);
    }
    const double value = sphere_area(n - 1) * (core + tail);
    const double rel = sphere_area(n - 1) * err / value;
    if (!(rel <= 1e-11))
        throw Error("compute_C_ns", strcat("radial quadrature did not converge, residual estimate ", rel));
    return value;
}

/// Closed-form symbol coefficient: I_n^s e^{ik.x} = -lambda |k|^{2s} e^{ik.x}.
inline double lambda_closed_form(const FracOrder& o)
{
    return std::pow(M_PI, 0.5 * o.n) * std::tgamma(1.0 - o.s)
           / (o.s * std::pow(4.0, o.s) * std::tgamma(0.5 * o.n + o.s));
}

struct SymbolCalibration {
    double lambda = 0.0;       // read off at probe wavenumber k = 1
    double lambda_2k = 0.0;    // read off at k = 2 (homogeneity check)
    double closed_form = 0.0;
    double rel_diff = 0.0;     // |lambda - closed_form| / closed_form
    double homogeneity = 0.0;  // |lambda_2k / lambda - 1|
};

namespace detail {

/// Sphere average of cos(r w_1) over w in S^{n-1}.
inline double sphere_avg_cos(int n, double r)
{
    if (n == 1) return std::cos(r);
    if (r < 1e-6) return 1.0 - r * r / (2.0 * n);
    const double nu = 0.5 * n - 1.0;
    if (n == 3) return std::sin(r) / r;
    if (n == 2) return boost::math::cyl_bessel_j(0, r);
    return std::tgamma(nu + 1.0) * std::pow(2.0 / r, nu) * boost::math::cyl_bessel_j(nu, r);
}

/// \int_0^inf rho^{-1-2s}(1 - avg_cos(k rho)) d rho, integrated in rho units.
inline double probe_integral(int n, double s, double k)
{
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    auto g = [&](double rho) {
        if (rho <= 0.0) return 0.0;
        const double r = k * rho;
        if (r < 1e-3) return k * k * std::pow(rho, 1.0 - 2 * s) / (2.0 * n) * (1.0 - r * r / (4.0 * (n + 2)));
        return std::pow(rho, -1.0 - 2 * s) * (1.0 - sphere_avg_cos(n, r));
    };
    // first piece carries the rho^{1-2s} endpoint behaviour
    boost::math::quadrature::tanh_sinh<double> ts;
    const double piece = 1.3;
    double acc = ts.integrate(g, 0.0, piece);
    const double rho_end = std::ceil(2.0e4 / k / piece) * piece;
    for (double a = piece; a < rho_end - 0.5 * piece; a += piece)
        acc += GK::integrate(g, a, a + piece, 0, 0.0);
    // beyond rho_end: \int rho^{-1-2s} drho minus the oscillatory part, which
    // is integrated by parts against the large-argument cosine form
    const double X = k * rho_end;
    acc += std::pow(rho_end, -2 * s) / (2 * s);
    double b, phase, amp;
    if (n == 1) {
        b = 1.0 + 2 * s; phase = 0.0; amp = 1.0;
    } else {
        const double nu = 0.5 * n - 1.0;
        b = 1.0 + 2 * s + nu + 0.5;
        phase = 0.5 * nu * M_PI + 0.25 * M_PI;
        amp = std::tgamma(nu + 1.0) * std::pow(2.0, nu) * std::sqrt(2.0 / M_PI);
    }
    const double osc = -std::pow(X, -b) * std::sin(X - phase) + b * std::pow(X, -b - 1) * std::cos(X - phase);
    acc -= std::pow(k, 2 * s) * amp * osc;
    return acc;
}

} // namespace detail

/// Reads the Fourier symbol off the defining integral applied to the probe
/// cos(k x_1) at x = 0, for k = 1 and k = 2.
inline SymbolCalibration calibrate_spectral_symbol(const FracOrder& order)
{
    order.validate();
    const double S = sphere_area(order.n);
    SymbolCalibration c;
    c.lambda = S * detail::probe_integral(order.n, order.s, 1.0);
    c.lambda_2k = S * detail::probe_integral(order.n, order.s, 2.0) / std::pow(2.0, 2 * order.s);
    c.closed_form = lambda_closed_form(order);
    c.rel_diff = std::abs(c.lambda - c.closed_form) / c.closed_form;
    c.homogeneity = std::abs(c.lambda_2k / c.lambda - 1.0);
    if (!(c.rel_diff <= 1e-6) || !(c.homogeneity <= 1e-6))
        throw Error("calibrate_spectral_symbol",
                    strcat("probe value ", c.lambda, " (k=2: ", c.lambda_2k, ") vs closed form ", c.closed_form));
    return c;
}

struct FracConstants {
    double c_ns = 0.0;
    double spectral_symbol_coeff = 0.0;

    /// Cached per (s, n).
    static const FracConstants& get(const FracOrder& o)
    {
        static std::map<std::pair<double, int>, FracConstants> cache;
        auto key = std::make_pair(o.s, o.n);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        FracConstants c;
        c.c_ns = compute_C_ns(o);
        c.spectral_symbol_coeff = calibrate_spectral_symbol(o).lambda;
        return cache.emplace(key, c).first->second;
    }
};

// ---------------------------------------------------------------------------
// kernel integrals over balls and their complements

/// \int_{|z|<R} |z| |z|^{-n-2s} dz
inline double kernel_ball_moment(const FracOrder& o, double R)
{
    return sphere_area(o.n) * std::pow(R, 1 - 2 * o.s) / (1 - 2 * o.s);
}

/// \int_{|z|>R} |z|^{-n-2s} dz
inline double kernel_tail(const FracOrder& o, double R)
{
    return sphere_area(o.n) * std::pow(R, -2 * o.s) / (2 * o.s);
}

/// 1D cell weights w_j = \int_{(j-1/2)h}^{(j+1/2)h} |y|^{-1-2s} dy, j >= 1.
struct KernelWeights1D {
    double h = 0.0;
    double s = 0.25;
    std::vector<double> w;  // w[j], w[0] unused

    KernelWeights1D(double h_, double s_, int J) : h(h_), s(s_), w(std::size_t(J) + 1, 0.0)
    {
        for (int j = 1; j <= J; ++j) {
            const double a = (j - 0.5) * h, b = (j + 0.5) * h;
            // a^{-2s} - b^{-2s} without cancellation
            w[std::size_t(j)] = -std::pow(a, -2 * s) * std::expm1(-2 * s * std::log1p(h / a)) / (2 * s);
        }
    }

    /// Midpoint-weighted first moment over |y| < (J+1/2)h, with the center
    /// cell integrated exactly.  Returns (sum, radius).
    std::pair<double, double> ball_moment(double R) const
    {
        const int J = std::min(int(w.size()) - 1, int(std::floor(R / h - 0.5)));
        if (J < 1) throw Error("KernelWeights1D", "radius below two cells");
        double acc = 2.0 * std::pow(0.5 * h, 1 - 2 * s) / (1 - 2 * s);
        for (int j = J; j >= 1; --j) acc += 2.0 * (j * h) * w[std::size_t(j)];
        return {acc, (J + 0.5) * h};
    }
};

// ---------------------------------------------------------------------------
// 1D operator on a Profile1D

/// I_1^s u at the nodes as an affine map of the samples: I u = M u + b.
struct OneDOperator {
    Eigen::MatrixXd M;
    Eigen::VectorXd b;

    Eigen::VectorXd apply(const std::vector<double>& u) const
    {
        Eigen::Map<const Eigen::VectorXd> v(u.data(), Eigen::Index(u.size()));
        return M * v + b;
    }
};

namespace detail {

using GL8 = GaussLegendre01<8>;

inline void hermite_basis(double t, double& h00, double& h10, double& h01, double& h11)
{
    const double t2 = t * t, u = 1 - t;
    h00 = (1 + 2 * t) * u * u;
    h10 = t * u * u;
    h01 = t2 * (3 - 2 * t);
    h11 = t2 * (t - 1);
}

/// \int over the spline piece [xa, xa+hk] (not touching 0) of the four Hermite
/// basis functions times |tau|^{-1-2s}; tau is measured from the target node.
inline std::array<double, 4> hermite_moments(double xa, double hk, double s)
{
    std::array<double, 4> q{0, 0, 0, 0};
    const bool right = xa > 0;
    const double near = right ? xa : -(xa + hk);
    const double far = near + hk;
    double a = near;
    while (a < far) {
        const double b = (near >= 2 * hk) ? far : std::min(far, a + 0.5 * a);
        const double len = b - a;
        for (int g = 0; g < 8; ++g) {
            const double sig = a + len * GL8::x[g];
            const double tau = right ? sig : -sig;
            const double t = (tau - xa) / hk;
            const double K = std::pow(sig, -1 - 2 * s) * len * GL8::w[g];
            double h00, h10, h01, h11;
            hermite_basis(t, h00, h10, h01, h11);
            q[0] += h00 * K;
            q[1] += h10 * K;
            q[2] += h01 * K;
            q[3] += h11 * K;
        }
        a = b;
    }
    return q;
}

/// Same for the two linear hat functions (1-r, r) on [xa, xa+hk].
inline std::array<double, 2> linear_moments(double xa, double hk, double s)
{
    std::array<double, 2> r{0, 0};
    const bool right = xa > 0;
    const double near = right ? xa : -(xa + hk);
    const double far = near + hk;
    double a = near;
    while (a < far) {
        const double b = (near >= 2 * hk) ? far : std::min(far, a + 0.5 * a);
        const double len = b - a;
        for (int g = 0; g < 8; ++g) {
            const double sig = a + len * GL8::x[g];
            const double tau = right ? sig : -sig;
            const double t = (tau - xa) / hk;
            const double K = std::pow(sig, -1 - 2 * s) * len * GL8::w[g];
            r[0] += (1 - t) * K;
            r[1] += t * K;
        }
        a = b;
    }
    return r;
}

/// k(theta) = \int_0^inf (1 - (1+x)^{-p}) (x + theta)^{-1-2s} dx.
inline double power_tail_integral(double theta, double p, double s)
{
    auto f = [&](double x) {
        if (x <= 0.0) return 0.0;
        const double g = -std::expm1(-p * std::log1p(x));
        if (x + theta < 1e-100) return (g / x) * std::pow(x, -2 * s);
        return g * std::pow(x + theta, -1 - 2 * s);
    };
    boost::math::quadrature::tanh_sinh<double> ts;
    boost::math::quadrature::exp_sinh<double> es;
    return ts.integrate(f, 0.0, 1.0) + es.integrate([&](double y) { return f(1.0 + y); });
}

} // namespace detail

/// Assemble the affine map for profile grids and tails.  Only xi and the
/// tails of `shape` are used; the samples themselves are not read.
inline OneDOperator assemble_frac_lap_1d(const Profile1D& shape, double s)
{
    const char* where = "frac_lap_1d";
    if (shape.xi.size() < 6) throw Error(where, "need at least 6 nodes");
    for (std::size_t k = 1; k < shape.xi.size(); ++k)
        if (!(shape.xi[k] > shape.xi[k - 1])) throw Error(where, "grid not strictly increasing");
    if (shape.left.kind == Tail::Kind::Power && !(shape.xi.front() < 0))
        throw Error(where, "power tail on the left needs a negative end node");
    if (shape.right.kind == Tail::Kind::Power && !(shape.xi.back() > 0))
        throw Error(where, "power tail on the right needs a positive end node");

    const auto& x = shape.xi;
    const int N = int(x.size());
    Eigen::MatrixXd Au = Eigen::MatrixXd::Zero(N, N);
    Eigen::MatrixXd Am = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd cst = Eigen::VectorXd::Zero(N);

    for (int i = 0; i < N; ++i) {
        for (int k = 0; k + 1 < N; ++k) {
            const double hk = x[k + 1] - x[k];
            if (k == i || k + 1 == i) {
                const double e1 = std::pow(hk, -2 * s) / (1 - 2 * s);
                const double e2 = std::pow(hk, -2 * s) / (2 - 2 * s);
                const double e3 = std::pow(hk, -2 * s) / (3 - 2 * s);
                const int o = (k == i) ? k + 1 : k;  // the other end of the piece
                const double sg = (k == i) ? 1.0 : -1.0;
                Am(i, i) += sg * hk * (e1 - 2 * e2 + e3);
                Au(i, o) += 3 * e2 - 2 * e3;
                Au(i, i) -= 3 * e2 - 2 * e3;
                Am(i, o) += sg * hk * (e3 - e2);
                continue;
            }
            const auto q = detail::hermite_moments(x[k] - x[i], hk, s);
            Au(i, k) += q[0];
            Am(i, k) += hk * q[1];
            Au(i, k + 1) += q[2];
            Am(i, k + 1) += hk * q[3];
            Au(i, i) -= q[0] + q[2];
        }

        // far field, one side at a time
        for (int side = 0; side < 2; ++side) {
            const Tail& t = side ? shape.right : shape.left;
            const int e = side ? N - 1 : 0;
            const double d = side ? x[N - 1] - x[i] : x[i] - x[0];
            const double he = side ? x[N - 1] - x[N - 2] : x[1] - x[0];
            const bool at_end = (i == e);
            switch (t.kind) {
            case Tail::Kind::Flat:
                if (!at_end) {
                    const double E = std::pow(d, -2 * s) / (2 * s);
                    Au(i, e) += E;
                    Au(i, i) -= E;
                }
                break;
            case Tail::Kind::Fixed: {
                if (at_end) {
                    const double e1 = std::pow(he, -2 * s) / (1 - 2 * s);
                    cst(i) += t.limit * e1;
                    Au(i, e) -= e1;
                } else {
                    // ramp as a linear piece starting at distance d
                    const double xa = side ? d : -(d + he);
                    const auto r = detail::linear_moments(xa, he, s);
                    // hats in local coordinate from the end node outward
                    const double w_end = side ? r[0] : r[1];
                    const double w_lim = side ? r[1] : r[0];
                    Au(i, e) += w_end;
                    cst(i) += t.limit * w_lim;
                    Au(i, i) -= w_end + w_lim;
                }
                const double E2 = std::pow(d + he, -2 * s) / (2 * s);
                cst(i) += t.limit * E2;
                Au(i, i) -= E2;
                break;
            }
            case Tail::Kind::Power: {
                const double L = side ? x[N - 1] : -x[0];
                if (!at_end) {
                    const double E = std::pow(d, -2 * s) / (2 * s);
                    Au(i, e) += E;
                    Au(i, i) -= E;
                }
                const double Kt = std::pow(L, -2 * s) * detail::power_tail_integral(d / L, t.p, s);
                Au(i, e) -= Kt;
                cst(i) += t.limit * Kt;
                break;
            }
            }
        }
    }

    // slopes are affine in the samples
    OneDOperator op;
    op.M = Au;
    op.b = cst;
    for (int j = 0; j < N; ++j) {
        const auto st = shape.slope_stencil(std::size_t(j));
        for (int m = 0; m < 5; ++m) op.M.col(Eigen::Index(st.idx[m])) += st.w[m] * Am.col(j);
        op.b += st.c * Am.col(j);
    }
    return op;
}

/// I_1^s applied to a profile, evaluated at its nodes.
inline Profile1D frac_lap_1d(const Profile1D& u, const FracOrder& order)
{
    order.validate();
    if (order.n != 1) throw Error("frac_lap_1d", "order must have n = 1");
    u.validate("frac_lap_1d");
    const auto op = assemble_frac_lap_1d(u, order.s);
    const auto v = op.apply(u.values);
    Profile1D out;
    out.xi = u.xi;
    out.values.assign(v.data(), v.data() + v.size());
    out.left = Tail::flat();
    out.right = Tail::flat();
    return out;
}

/// I_1^s of periodic samples (uniform grid, even N) with the same spline
/// quadrature; images beyond half a period are summed as a lattice series.
inline std::vector<double> frac_lap_1d_periodic(const std::vector<double>& u, double period, double s)
{
    const int N = int(u.size());
    if (N < 8 || N % 2) throw Error("frac_lap_1d_periodic", "need an even number >= 8 of samples");
    check_finite(u, "frac_lap_1d_periodic");
    const double h = period / N;
    std::vector<double> cu(std::size_t(N), 0.0), cm(std::size_t(N), 0.0);
    auto at = [&](std::vector<double>& c, int j) -> double& { return c[std::size_t(((j % N) + N) % N)]; };

    const double e1 = std::pow(h, -2 * s) / (1 - 2 * s);
    const double e2 = std::pow(h, -2 * s) / (2 - 2 * s);
    const double e3 = std::pow(h, -2 * s) / (3 - 2 * s);
    for (int sg = -1; sg <= 1; sg += 2) {
        at(cm, 0) += sg * h * (e1 - 2 * e2 + e3);
        at(cu, sg) += 3 * e2 - 2 * e3;
        at(cu, 0) -= 3 * e2 - 2 * e3;
        at(cm, sg) += sg * h * (e3 - e2);
    }
    for (int k = 1; k < N / 2; ++k) {
        for (int sg = -1; sg <= 1; sg += 2) {
            const int a = sg > 0 ? k : -k - 1;  // piece [a h, (a+1) h]
            const auto q = detail::hermite_moments(a * h, h, s);
            at(cu, a) += q[0];
            at(cm, a) += h * q[1];
            at(cu, a + 1) += q[2];
            at(cm, a + 1) += h * q[3];
            at(cu, 0) -= q[0] + q[2];
        }
    }
    // |tau| >= P/2: trapezoid over all periodic images (endpoints share a residue)
    const double p = 1 + 2 * s;
    const int Mx = 200;
    for (int r = -N / 2; r < N / 2; ++r) {
        const double v = double(r) / N;
        double acc = 0.0;
        for (int m = 1; m <= Mx; ++m) acc += std::pow(m + v, -p) + std::pow(m - v, -p);
        for (double w : {v, -v}) {
            const double a = Mx + 0.5 + w;
            acc += std::pow(a, 1 - p) / (p - 1) - p * std::pow(a, -p - 1) / 24.0;
        }
        const double wgt = h * std::pow(period, -p) * acc;
        at(cu, r) += wgt;
        at(cu, 0) -= wgt;
    }
    std::vector<double> m(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        auto U = [&](int j) { return u[std::size_t(((j % N) + N) % N)]; };
        m[std::size_t(i)] = (U(i - 2) - 8 * U(i - 1) + 8 * U(i + 1) - U(i + 2)) / (12 * h);
    }
    std::vector<double> out(std::size_t(N), 0.0);
    for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        for (int j = 0; j < N; ++j) {
            const std::size_t jj = std::size_t((i + j) % N);
            acc += cu[std::size_t(j)] * u[jj] + cm[std::size_t(j)] * m[jj];
        }
        out[std::size_t(i)] = acc;
    }
    return out;
}

/// Spectral I_1^s of periodic samples.
inline std::vector<double> frac_lap_1d_spectral(const std::vector<double>& u, double period, double lambda1, double s)
{
    Fft1 fft(int(u.size()));
    return fft.apply(u, period, [&](double k) { return -lambda1 * std::pow(std::abs(k), 2 * s); });
}

// ---------------------------------------------------------------------------
// 2D kernel tables

struct KernelOptions {
    double r_max = std::numeric_limits<double>::infinity();
    bool periodize = false;  // sum all lattice images (square boxes only)
    int pad = 1;             // table spans pad*nx x pad*ny offsets
    double cut_a = 0.0;      // weights carry (1 - eta(|z|)); eta = 1 below a,
    double cut_b = 0.0;      // 0 above b, quintic in between (a = b = 0: off)
    bool moments = false;    // keep first/second cell moments (Taylor-corrected rule)

    bool has_cut() const { return cut_b > 0.0; }
    auto key() const { return std::make_tuple(r_max, periodize, pad, cut_a, cut_b, moments); }
};

namespace detail {

/// 1 - eta(r) for the near/far split.
inline double far_factor(double r, double a, double b)
{
    if (!(b > 0)) return 1.0;
    return smoothstep5((r - a) / (b - a));
}

/// Kernel moments over the cell centred at (p, q), in units of the spacing:
/// w = \int K, m1 = \int (y - c) K, m2 = \int (y - c)(y - c)^T K, where
/// K = |y|^{-2-2s} (1 - eta(h|y|)) and c is the cell centre.
struct CellMoments {
    double w = 0, m1x = 0, m1y = 0, m2xx = 0, m2xy = 0, m2yy = 0;
};

inline CellMoments unit_cell_moments(int p, int q, double s, double h, double a, double b)
{
    const int k = std::max(std::abs(p), std::abs(q));
    const double pw = -1.0 - s;  // |y|^{-2-2s} = (|y|^2)^{-1-s}
    auto sum_gl = [&](auto gl, int sub) {
        CellMoments m;
        const double len = 1.0 / sub;
        for (int ix = 0; ix < sub; ++ix)
            for (int iy = 0; iy < sub; ++iy) {
                const double x0 = p - 0.5 + ix * len, y0 = q - 0.5 + iy * len;
                for (std::size_t gx = 0; gx < gl.x.size(); ++gx)
                    for (std::size_t gy = 0; gy < gl.x.size(); ++gy) {
                        const double X = x0 + len * gl.x[gx], Y = y0 + len * gl.x[gy];
                        const double r2 = X * X + Y * Y;
                        double f = std::pow(r2, pw);
                        if (b > 0) f *= far_factor(h * std::sqrt(r2), a, b);
                        f *= gl.w[gx] * gl.w[gy];
                        const double dx = X - p, dy = Y - q;
                        m.w += f;
                        m.m1x += f * dx;
                        m.m1y += f * dy;
                        m.m2xx += f * dx * dx;
                        m.m2xy += f * dx * dy;
                        m.m2yy += f * dy * dy;
                    }
            }
        const double c = len * len;
        m.w *= c; m.m1x *= c; m.m1y *= c; m.m2xx *= c; m.m2xy *= c; m.m2yy *= c;
        return m;
    };
    if (k == 1) return sum_gl(GaussLegendre01<8>{}, 8);
    if (k <= 4) return sum_gl(GaussLegendre01<8>{}, 4);
    if (k <= 16) return sum_gl(GaussLegendre01<8>{}, 1);
    return sum_gl(GaussLegendre01<5>{}, 1);
}

/// \int_{|y|_inf > a} |y|^{-q} dy in 2D.
inline double square_exterior_integral(double a, double q)
{
    auto f = [&](double th) { return std::pow(a / std::cos(th), 2 - q) / (q - 2); };
    return 8.0 * boost::math::quadrature::gauss<double, 30>::integrate(f, 0.0, M_PI / 4);
}

/// Lattice constants for images beyond the inner shell M:
///   T0 = sum_{|m|_inf > M} |m|^{-p},  S2 = p^2 sum_{|m|_inf > M} |m|^{-p-2}.
inline std::pair<double, double> lattice_far_sums(double p, int M)
{
    static std::map<std::pair<double, int>, std::pair<double, double>> cache;
    auto it = cache.find({p, M});
    if (it != cache.end()) return it->second;
    const int M2 = 600;
    double t0 = 0.0, s2 = 0.0;
    for (int a = M + 1; a <= M2; ++a) {
        // shell |m|_inf = a: 8 points of the form (a, b), 0 < b < a, times 8 symmetric,
        // plus axes and diagonals
        double sh0 = 0.0, sh2 = 0.0;
        for (int b = 1; b < a; ++b) {
            const double r2 = double(a) * a + double(b) * b;
            sh0 += 8.0 * std::pow(r2, -0.5 * p);
            sh2 += 8.0 * std::pow(r2, -0.5 * p - 1);
        }
        const double ax = double(a) * a, dg = 2.0 * a * a;
        sh0 += 4.0 * std::pow(ax, -0.5 * p) + 4.0 * std::pow(dg, -0.5 * p);
        sh2 += 4.0 * std::pow(ax, -0.5 * p - 1) + 4.0 * std::pow(dg, -0.5 * p - 1);
        t0 += sh0;
        s2 += sh2;
    }
    const double a = M2 + 0.5;
    t0 += square_exterior_integral(a, p) - p * p / 24.0 * square_exterior_integral(a, p + 2);
    s2 += square_exterior_integral(a, p + 2) - (p + 2) * (p + 2) / 24.0 * square_exterior_integral(a, p + 4);
    auto r = std::make_pair(t0, p * p * s2);
    cache[{p, M}] = r;
    return r;
}

} // namespace detail

/// Per-offset kernel weights on a grid of nx x ny cells of size h.
///
/// With `moments` the first and second kernel moments of every cell are kept
/// as well; the operator then uses the second-order Taylor expansion of u in
/// each cell instead of its centre value (error O(h^{3-2s}) instead of
/// O(h^{2-2s}) for smooth u).
class KernelWeights {
public:
    FracOrder order;
    int nx = 0, ny = 0;
    double h = 0.0;
    KernelOptions opt;
    int tx = 0, ty = 0;          // table shape (torus of offsets)
    std::vector<double> table;   // table[j*tx + i]; offset dx = i or i - tx
    std::vector<double> m1x, m1y, m2xx, m2xy, m2yy;  // physical units, empty unless opt.moments
    double total = 0.0;          // sum of all stored weights
    double tail_coefficient = 0.0;
    double center_moment = 0.0;  // \int_{center cell} |y|^{2-n-2s}

    KernelWeights(const FracOrder& o, int nx_, int ny_, double h_, const KernelOptions& op)
        : order(o), nx(nx_), ny(ny_), h(h_), opt(op)
    {
        const char* where = "KernelWeights";
        order.validate();
        if (order.n != 2) throw Error(where, "grid kernels are two-dimensional");
        if (opt.pad != 1 && opt.pad != 2) throw Error(where, "pad must be 1 or 2");
        if (opt.periodize && (nx != ny || opt.pad != 1))
            throw Error(where, "periodized weights need a square torus table");
        if (opt.has_cut() && !(opt.cut_a >= 0 && opt.cut_b > opt.cut_a))
            throw Error(where, "cutoff needs 0 <= a < b");
        const double half = 0.5 * std::min(nx, ny) * h;
        if (!opt.periodize && opt.pad == 1) {
            if (!std::isfinite(opt.r_max)) opt.r_max = half;
            if (opt.r_max > half + 1e-12 * half)
                throw Error(where, strcat("r_max ", opt.r_max, " exceeds half the box ", half,
                                          " (wraparound would double-count)"));
        }
        tx = opt.pad * nx;
        ty = opt.pad * ny;
        const std::size_t sz = std::size_t(tx) * ty;
        table.assign(sz, 0.0);
        if (opt.moments) {
            m1x.assign(sz, 0.0); m1y.assign(sz, 0.0);
            m2xx.assign(sz, 0.0); m2xy.assign(sz, 0.0); m2yy.assign(sz, 0.0);
        }
        const double s = order.s;
        const double scale = std::pow(h, -2 * s);
        const double p = 2 + 2 * s;

        std::pair<double, double> far{0, 0};
        const int M = 10;
        if (opt.periodize) far = detail::lattice_far_sums(p, M);
        const double Lbox = nx * h;

        // offsets covered: torus residues for pad = 1, |d| < n for pad = 2
        const int xlo = opt.pad == 1 ? -(nx / 2) : -(nx - 1), xhi = opt.pad == 1 ? (nx - 1) / 2 : nx - 1;
        const int ylo = opt.pad == 1 ? -(ny / 2) : -(ny - 1), yhi = opt.pad == 1 ? (ny - 1) / 2 : ny - 1;
        const int Amax = std::max(std::max(-xlo, xhi), std::max(-ylo, yhi));
        const double a_units = opt.cut_a / h;

        for (int A = 1; A <= Amax; ++A) {
            for (int B = 0; B <= A; ++B) {
                // quick reject: no symmetric image inside the table or radius
                const double cr = h * std::hypot(double(A), double(B));
                if (!opt.periodize && cr > opt.r_max) continue;
                detail::CellMoments cm;
                if (!(opt.has_cut() && std::hypot(A + 0.5, B + 0.5) <= a_units))
                    cm = detail::unit_cell_moments(A, B, s, h, opt.cut_a, opt.cut_b);
                double w = scale * cm.w;
                if (opt.periodize) {
                    const double ux = double(A) / nx, uy = double(B) / ny;
                    double g = 0.0;
                    for (int my = -M; my <= M; ++my)
                        for (int mx = -M; mx <= M; ++mx) {
                            if (mx == 0 && my == 0) continue;
                            const double X = ux + mx, Y = uy + my;
                            g += std::pow(X * X + Y * Y, -0.5 * p);
                        }
                    g += far.first + 0.25 * (ux * ux + uy * uy) * far.second;
                    w += h * h * std::pow(Lbox, -p) * g;
                }
                for (int sw = 0; sw < 2; ++sw) {
                    if (sw == 1 && A == B) break;
                    const int X0 = sw ? B : A, Y0 = sw ? A : B;
                    for (int sx = -1; sx <= 1; sx += 2) {
                        if (sx == 1 && X0 == 0) continue;
                        for (int sy = -1; sy <= 1; sy += 2) {
                            if (sy == 1 && Y0 == 0) continue;
                            const int qx = sx * X0, qy = sy * Y0;
                            if (qx < xlo || qx > xhi || qy < ylo || qy > yhi) continue;
                            const std::size_t k = std::size_t((qy + ty) % ty) * tx + std::size_t((qx + tx) % tx);
                            table[k] = w;
                            if (opt.moments) {
                                const double a1x = sw ? cm.m1y : cm.m1x, a1y = sw ? cm.m1x : cm.m1y;
                                const double axx = sw ? cm.m2yy : cm.m2xx, ayy = sw ? cm.m2xx : cm.m2yy;
                                m1x[k] = scale * h * sx * a1x;
                                m1y[k] = scale * h * sy * a1y;
                                m2xx[k] = scale * h * h * axx;
                                m2yy[k] = scale * h * h * ayy;
                                m2xy[k] = scale * h * h * sx * sy * cm.m2xy;
                            }
                        }
                    }
                }
            }
        }
        for (double v : table) total += v;

        if (opt.periodize) {
            tail_coefficient = 0.0;
        } else {
            const double rr = std::min(opt.r_max, (opt.pad == 1 ? 0.5 : 1.0) * std::min(nx, ny) * h);
            tail_coefficient = kernel_tail(order, std::max(rr - h / std::sqrt(2.0), h));
        }
        if (!opt.has_cut()) {
            auto f = [&](double th) { return std::pow(0.5 * h / std::cos(th), 2 - 2 * s) / (2 - 2 * s); };
            center_moment = 8.0 * boost::math::quadrature::gauss<double, 30>::integrate(f, 0.0, M_PI / 4);
        }
    }

    double at(int dx, int dy) const
    {
        const int ix = ((dx % tx) + tx) % tx, iy = ((dy % ty) + ty) % ty;
        return table[std::size_t(iy) * tx + ix];
    }

    const KernelSpectrum& spectrum() const
    {
        if (!spec_) spec_ = std::make_shared<KernelSpectrum>(table, tx, ty);
        return *spec_;
    }

    /// Spectra of the moment tables, in the order m1x, m1y, m2xx, m2xy, m2yy.
    const std::vector<KernelSpectrum>& moment_spectra() const
    {
        if (mspec_.empty() && opt.moments)
            for (const auto* t : {&m1x, &m1y, &m2xx, &m2xy, &m2yy}) mspec_.emplace_back(*t, tx, ty);
        return mspec_;
    }

private:
    mutable std::shared_ptr<KernelSpectrum> spec_;
    mutable std::vector<KernelSpectrum> mspec_;
};

/// Shared, cached weight tables.
inline std::shared_ptr<const KernelWeights> make_kernel_weights(const FracOrder& o, int nx, int ny, double h,
                                                                const KernelOptions& opt = {})
{
    using Key = std::tuple<double, int, int, int, double, std::tuple<double, bool, int, double, double, bool>>;
    static std::map<Key, std::shared_ptr<const KernelWeights>> cache;
    Key key{o.s, o.n, nx, ny, h, opt.key()};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto w = std::make_shared<const KernelWeights>(o, nx, ny, h, opt);
    cache[key] = w;
    return w;
}

// ---------------------------------------------------------------------------
// 2D operators

inline double five_point_laplacian(const ScalarField& u, int i, int j)
{
    return (u.wrap(i + 1, j) + u.wrap(i - 1, j) + u.wrap(i, j + 1) + u.wrap(i, j - 1) - 4 * u(i, j)) / (u.h * u.h);
}

/// Fourth-order periodic difference quotients (ux, uy, uxx, uxy, uyy) at (i, j).
inline std::array<double, 5> fd4_derivatives(const ScalarField& u, int i, int j)
{
    static constexpr std::array<double, 5> d1{1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
    static constexpr std::array<double, 5> d2{-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
    double ux = 0, uy = 0, uxx = 0, uyy = 0, uxy = 0;
    for (int k = 0; k < 5; ++k) {
        ux += d1[k] * u.wrap(i + k - 2, j);
        uy += d1[k] * u.wrap(i, j + k - 2);
        uxx += d2[k] * u.wrap(i + k - 2, j);
        uyy += d2[k] * u.wrap(i, j + k - 2);
        if (d1[k] != 0.0)
            for (int l = 0; l < 5; ++l)
                if (d1[l] != 0.0) uxy += d1[k] * d1[l] * u.wrap(i + k - 2, j + l - 2);
    }
    const double h = u.h;
    return {ux / h, uy / h, uxx / (h * h), uxy / (h * h), uyy / (h * h)};
}

inline double oscillation(const std::vector<double>& v)
{
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

struct DirectValue {
    double value = 0.0;
    double tail_bound = 0.0;
};

/// sum_z w(z) (u(x+z) - u(x)) over the stored offsets at grid point (i, j),
/// periodic wraparound, plus the second-order centre-cell term.
inline DirectValue frac_lap_nd_direct(const ScalarField& u, const KernelWeights& w, int i, int j)
{
    const char* where = "frac_lap_nd_direct";
    if (u.nx != w.nx || u.ny != w.ny || u.h != w.h) throw Error(where, "weights built for another grid");
    if (w.opt.pad != 1) throw Error(where, "padded tables wrap more than once on the torus");
    if (i < 0 || j < 0 || i >= u.nx || j >= u.ny) throw Error(where, "grid index out of range");
    const double u0 = u(i, j);
    double acc = 0.0;
    for (int b = 0; b < w.ty; ++b) {
        const int dy = b <= w.ty / 2 ? b : b - w.ty;
        for (int a = 0; a < w.tx; ++a) {
            const std::size_t k = std::size_t(b) * w.tx + a;
            const double wt = w.table[k];
            if (wt == 0.0) continue;
            const int dx = a <= w.tx / 2 ? a : a - w.tx;
            acc += wt * (u.wrap(i + dx, j + dy) - u0);
            if (w.opt.moments) {
                const auto d = fd4_derivatives(u, i + dx, j + dy);
                acc += w.m1x[k] * d[0] + w.m1y[k] * d[1]
                       + 0.5 * (w.m2xx[k] * d[2] + 2 * w.m2xy[k] * d[3] + w.m2yy[k] * d[4]);
            }
        }
    }
    acc += 0.25 * five_point_laplacian(u, i, j) * w.center_moment;
    return {acc, oscillation(u.data) * w.tail_coefficient};
}

/// Whole-field version of frac_lap_nd_direct through FFT correlation.
inline ScalarField frac_lap_nd_direct_field(const ScalarField& u, const KernelWeights& w)
{
    const char* where = "frac_lap_nd_direct_field";
    if (u.nx != w.nx || u.ny != w.ny || u.h != w.h) throw Error(where, "weights built for another grid");
    if (w.opt.pad != 1) throw Error(where, "use a torus table (pad = 1)");
    ScalarField out = u.like<double>();
    const auto conv = w.spectrum().apply(u.data);
    for (int j = 0; j < u.ny; ++j)
        for (int i = 0; i < u.nx; ++i) {
            const std::size_t k = std::size_t(j) * u.nx + i;
            out.data[k] = conv[k] - w.total * u.data[k] + 0.25 * five_point_laplacian(u, i, j) * w.center_moment;
        }
    if (w.opt.moments) {
        std::array<std::vector<double>, 5> der;
        for (auto& d : der) d.resize(u.size());
        for (int j = 0; j < u.ny; ++j)
            for (int i = 0; i < u.nx; ++i) {
                const auto d = fd4_derivatives(u, i, j);
                for (int c = 0; c < 5; ++c) der[c][std::size_t(j) * u.nx + i] = d[c];
            }
        const auto& ms = w.moment_spectra();
        const std::array<double, 5> f{1.0, 1.0, 0.5, 1.0, 0.5};
        for (int c = 0; c < 5; ++c) {
            const auto r = ms[c].apply(der[c]);
            for (std::size_t k = 0; k < r.size(); ++k) out.data[k] += f[c] * r[k];
        }
    }
    return out;
}

/// Fourier multiplier path: I u = F^{-1}[-lambda |k|^{2s} F u].
inline ScalarField frac_lap_nd_spectral(const ScalarField& u, const FracOrder& order, const FracConstants& c)
{
    order.validate();
    if (order.n != 2) throw Error("frac_lap_nd_spectral", "field is two-dimensional but order.n != 2");
    auto& fft = Fft2::get(u.nx, u.ny);
    auto F = fft.forward(u.data);
    const int nxc = fft.nxc();
    const double Lx = u.box_x(), Ly = u.box_y();
    for (int j = 0; j < u.ny; ++j)
        for (int i = 0; i < nxc; ++i) {
            const double kx = fft.kx(i, Lx), ky = fft.ky(j, Ly);
            const double k2 = kx * kx + ky * ky;
            F[std::size_t(j) * nxc + i] *= -c.spectral_symbol_coeff * std::pow(k2, order.s);
        }
    ScalarField out = u.like<double>();
    out.data = fft.inverse(F);
    return out;
}

struct BoundCheck {
    double bound = 0.0;
    double actual = 0.0;
};

/// |I u| <= |S| ( |Du|_inf R^{1-2s}/(1-2s) + 2|u|_inf R^{-2s}/(2s) ).
inline BoundCheck operator_bound_check(const ScalarField& u, const FracOrder& order, double R)
{
    order.validate();
    if (!(R > 0)) throw Error("operator_bound_check", "R must be positive");
    const auto& c = FracConstants::get(order);
    auto& fft = Fft2::get(u.nx, u.ny);
    const auto F = fft.forward(u.data);
    const int nxc = fft.nxc();
    std::vector<cplx> Gx(F.size()), Gy(F.size());
    for (int j = 0; j < u.ny; ++j)
        for (int i = 0; i < nxc; ++i) {
            const std::size_t k = std::size_t(j) * nxc + i;
            const bool nyq = (i == u.nx / 2 && u.nx % 2 == 0) || (u.ny % 2 == 0 && j == u.ny / 2);
            Gx[k] = nyq ? 0.0 : cplx(0, fft.kx(i, u.box_x())) * F[k];
            Gy[k] = nyq ? 0.0 : cplx(0, fft.ky(j, u.box_y())) * F[k];
        }
    const auto gx = fft.inverse(Gx), gy = fft.inverse(Gy);
    double du = 0.0;
    for (std::size_t k = 0; k < gx.size(); ++k) du = std::max(du, std::hypot(gx[k], gy[k]));
    const double un = sup_norm(u.data);
    BoundCheck r;
    r.bound = du * kernel_ball_moment(order, R) + 2 * un * kernel_tail(order, R);
    r.actual = sup_norm(frac_lap_nd_spectral(u, order, c).data);
    return r;
}

} // namespace fracflow
