#pragma once

// Layer solution of C I_1^s phi = W'(phi), the constant c0, and the corrector
// L[psi] = g with L = -C I_1^s + W''(phi).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "fracops.hpp"
#include "profile1d.hpp"

namespace fracflow {

struct DoubleWell {
    std::function<double(double)> W, dW, d2W;
    double alpha = 1.0;       // W''(0) = W''(1)
    double max_curvature = 1; // max of W'' on [0,1], the stabiliser for time stepping
    std::string name = "quartic";

    /// W(u) = u^2 (1-u)^2 / 2.
    static DoubleWell standard()
    {
        DoubleWell w;
        w.W = [](double u) { return 0.5 * u * u * (1 - u) * (1 - u); };
        w.dW = [](double u) { return u * (1 - u) * (1 - 2 * u); };
        w.d2W = [](double u) { return 1 - 6 * u + 6 * u * u; };
        w.alpha = 1.0;
        w.max_curvature = 1.0;
        w.validate();
        return w;
    }

    /// Sampling check of the structural assumptions on the potential.
    void validate() const
    {
        const char* where = "DoubleWell";
        if (!W || !dW || !d2W) throw Error(where, "missing evaluator");
        const double tol = 1e-12;
        if (std::abs(W(0)) > tol || std::abs(W(1)) > tol) throw Error(where, "W(0) = W(1) = 0 violated");
        if (std::abs(dW(0)) > tol || std::abs(dW(1)) > tol) throw Error(where, "W'(0) = W'(1) = 0 violated");
        if (std::abs(d2W(0) - d2W(1)) > 1e-10 || !(d2W(0) > 0)) throw Error(where, "W''(0) = W''(1) > 0 violated");
        if (std::abs(d2W(0) - alpha) > 1e-10) throw Error(where, "alpha must equal W''(0)");
        for (int k = 1; k < 200; ++k) {
            const double u = k / 200.0;
            if (!(W(u) > 0)) throw Error(where, "W must be positive on (0,1)");
            if (d2W(u) > max_curvature + 1e-12) throw Error(where, "max_curvature below sup W''");
        }
    }
};

/// Default grid for the layer problem: uniform core a few widths wide, then
/// geometric spacing far into the algebraic tails.  The window has to be huge:
/// the part of \int g phi' lost outside [-L, L] only decays like 1/L and feeds
/// straight into the corrector residual.
inline ProfileGrid default_layer_grid(const FracOrder& order, double c_ns)
{
    const double width = std::pow(c_ns, 1.0 / (2 * order.s));  // natural length of the layer equation
    ProfileGrid g;
    g.kind = ProfileGrid::Kind::Stretched;
    g.core_L = 8.0 * width;
    g.core_h = width / 40.0;
    g.growth = 1.025;
    g.L = std::max(20.0, width * 2e10);
    return g;
}

struct LayerResult {
    Profile1D phi;
    double residual = 0.0;             // sup_i |C I phi - W'(phi)| at the nodes
    double multiplier = 0.0;           // translation multiplier (0 by symmetry)
    int iterations = 0;
    std::vector<double> residual_history;
    double c_ns = 0.0;
    double s = 0.0;
};

/// Newton iteration with pseudo-transient continuation for
///   C (M phi + b) - W'(phi) + c D phi = 0,   phi(0) = 1/2,
/// where c pins the translation mode.  Tails: Heaviside plus |xi|^{-2s}.
inline LayerResult solve_layer(const DoubleWell& well, const FracOrder& order, double c_ns, const ProfileGrid& grid,
                               double tol = 1e-11, int max_iter = 200)
{
    const char* where = "solve_layer";
    order.validate();
    well.validate();
    if (!(c_ns > 0)) throw Error(where, "C_{n,s} must be positive");
    Profile1D phi;
    phi.xi = grid.build();
    if (!(phi.xi.back() >= 20.0)) throw Error(where, "grid half-width must be at least 20");
    const int N = int(phi.xi.size());
    int i0 = -1;
    for (int i = 0; i < N; ++i)
        if (phi.xi[std::size_t(i)] == 0.0) i0 = i;
    if (i0 < 0) throw Error(where, "grid must contain the node xi = 0");
    const double s = order.s;
    phi.left = Tail::power(0.0, 2 * s);
    phi.right = Tail::power(1.0, 2 * s);

    // clamped linear ramp across a few natural widths
    const double width = std::pow(c_ns, 1.0 / (2 * s));
    phi.values.resize(std::size_t(N));
    for (int i = 0; i < N; ++i) {
        const double r = 0.5 + phi.xi[std::size_t(i)] / (4 * width);
        phi.values[std::size_t(i)] = std::clamp(r, 0.02, 0.98);
    }

    const OneDOperator op = assemble_frac_lap_1d(phi, s);
    // derivative operator D u = S u + sigma from the slope stencils
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd sig = Eigen::VectorXd::Zero(N);
    for (int i = 0; i < N; ++i) {
        const auto st = phi.slope_stencil(std::size_t(i));
        for (int m = 0; m < 5; ++m) S(i, Eigen::Index(st.idx[m])) += st.w[m];
        sig(i) = st.c;
    }

    LayerResult res;
    res.c_ns = c_ns;
    res.s = s;
    Eigen::VectorXd u = Eigen::Map<Eigen::VectorXd>(phi.values.data(), N);
    double c = 0.0;
    double dtau = 1.0;
    double prev = -1.0;
    auto residual = [&](const Eigen::VectorXd& v, double cc) {
        Eigen::VectorXd F = c_ns * (op.M * v + op.b);
        const Eigen::VectorXd Dv = S * v + sig;
        for (int i = 0; i < N; ++i) F(i) += -well.dW(v(i)) + cc * Dv(i);
        return F;
    };
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd F = residual(u, c);
        const double rn = F.lpNorm<Eigen::Infinity>() + std::abs(u(i0) - 0.5);
        res.residual_history.push_back(rn);
        res.iterations = it;
        if (rn <= tol) break;
        if (prev > 0) dtau = std::min(1e12, dtau * std::max(0.5, std::min(10.0, prev / rn)));
        prev = rn;
        Eigen::MatrixXd J(N + 1, N + 1);
        J.topLeftCorner(N, N) = c_ns * op.M + c * S;
        for (int i = 0; i < N; ++i) J(i, i) += -well.d2W(u(i)) - 1.0 / dtau;
        J.block(0, N, N, 1) = S * u + sig;
        J.row(N).setZero();
        J(N, i0) = 1.0;
        Eigen::VectorXd rhs(N + 1);
        rhs.head(N) = -F;
        rhs(N) = -(u(i0) - 0.5);
        const Eigen::VectorXd d = J.partialPivLu().solve(rhs);
        u += d.head(N);
        c += d(N);
        for (int i = 0; i < N; ++i) u(i) = std::clamp(u(i), 1e-15, 1.0 - 1e-15);
    }
    const Eigen::VectorXd F0 = residual(u, 0.0);
    res.residual = F0.lpNorm<Eigen::Infinity>();
    res.multiplier = c;
    if (!(res.residual_history.back() <= tol * 10)) {
        std::string hist;
        for (double r : res.residual_history) hist += strcat(r, " ");
        throw Error(where, "residual stagnated; history: " + hist);
    }
    phi.values.assign(u.data(), u.data() + N);
    phi.values[std::size_t(i0)] = 0.5;
    phi.invalidate();
    for (int i = 1; i < N; ++i)
        if (!(phi.values[std::size_t(i)] > phi.values[std::size_t(i - 1)]))
            throw Error(where, strcat("non-monotone profile at xi = ", phi.xi[std::size_t(i)]));
    res.phi = std::move(phi);
    return res;
}

/// Integrals of phi' and phi'^2 over R: Hermite window plus closed-form tails.
struct LayerIntegrals {
    double int_dphi = 0.0;
    double int_dphi2 = 0.0;
};

inline LayerIntegrals layer_integrals(const Profile1D& phi)
{
    LayerIntegrals r;
    r.int_dphi = phi.integrate_window([](double, double, double d) { return d; });
    r.int_dphi2 = phi.integrate_window([](double, double, double d) { return d * d; });
    // tails: phi' = p A |xi|^{-p-1}
    for (int side = 0; side < 2; ++side) {
        const Tail& t = side ? phi.right : phi.left;
        const double L = side ? phi.xi.back() : -phi.xi.front();
        const double uend = side ? phi.values.back() : phi.values.front();
        if (t.kind == Tail::Kind::Power) {
            const double A = side ? phi.amp_right() : phi.amp_left();
            const double p = t.p;
            r.int_dphi += std::abs(t.limit - uend);
            r.int_dphi2 += p * p * A * A * std::pow(L, -2 * p - 1) / (2 * p + 1);
        } else if (t.kind == Tail::Kind::Fixed) {
            const std::size_t n = phi.xi.size();
            const double he = side ? phi.xi[n - 1] - phi.xi[n - 2] : phi.xi[1] - phi.xi[0];
            r.int_dphi += std::abs(t.limit - uend);
            r.int_dphi2 += (t.limit - uend) * (t.limit - uend) / he;
        }
    }
    return r;
}

inline double compute_c0(const Profile1D& phi)
{
    const auto I = layer_integrals(phi);
    if (!(I.int_dphi2 > 0)) throw Error("compute_c0", "non-positive integral of phi'^2");
    return 1.0 / I.int_dphi2;
}

/// g = c0 phi' + (W''(phi) - alpha)/alpha, sampled at the nodes.
inline Profile1D corrector_rhs(const Profile1D& phi, const DoubleWell& well, double c0)
{
    Profile1D g;
    g.xi = phi.xi;
    const auto& m = phi.slopes();
    g.values.resize(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i)
        g.values[i] = c0 * m[i] + (well.d2W(phi.values[i]) - well.alpha) / well.alpha;
    const double p = phi.right.p > 0 ? phi.right.p : 1.0;
    g.left = Tail::power(0.0, p);
    g.right = Tail::power(0.0, p);
    return g;
}

/// \int g phi' over R with g taken pointwise from the interpolants of phi.
inline double solvability_integral(const Profile1D& phi, const DoubleWell& well, double c0)
{
    const double a = well.alpha;
    double acc = c0 * layer_integrals(phi).int_dphi2;
    acc += phi.integrate_window([&](double, double u, double d) { return (well.d2W(u) - a) * d / a; });
    // tails: (W''(phi) - a) phi' / a = d/dxi [W'(phi) - a phi] / a
    auto P = [&](double u) { return (well.dW(u) - a * u) / a; };
    const double lo = phi.left.kind == Tail::Kind::Power || phi.left.kind == Tail::Kind::Fixed ? phi.left.limit
                                                                                                 : phi.values.front();
    const double hi = phi.right.kind == Tail::Kind::Power || phi.right.kind == Tail::Kind::Fixed ? phi.right.limit
                                                                                                   : phi.values.back();
    acc += P(hi) - P(phi.values.back());
    acc += P(phi.values.front()) - P(lo);
    return acc;
}

struct CorrectorProfile {
    Profile1D psi_tilde;
    double residual_norm = 0.0;        // sup |L psi - g| at the nodes
    double orthogonality_defect = 0.0; // |\int psi phi'|
    double multiplier = 0.0;           // bordered-system multiplier on phi'
    double kernel_defect = 0.0;        // sup |L phi'| (discrete translation mode)
    double rcond = 0.0;
};

/// Trapezoid inner product on the profile window.
inline double window_dot(const Profile1D& grid, const std::vector<double>& a, const std::vector<double>& b)
{
    const auto w = grid.trapezoid_weights();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * a[i] * b[i];
    return acc;
}

inline CorrectorProfile solve_corrector(const Profile1D& phi, const DoubleWell& well, double c0, double c_ns,
                                        double s)
{
    const char* where = "solve_corrector";
    const double defect = solvability_integral(phi, well, c0);
    if (!(std::abs(defect) <= 1e-6)) throw Error(where, strcat("right-hand side not orthogonal to phi': ", defect));
    const int N = int(phi.size());
    Profile1D shape;
    shape.xi = phi.xi;
    shape.values.assign(phi.size(), 0.0);
    shape.left = Tail::fixed(0.0);
    shape.right = Tail::fixed(0.0);
    const OneDOperator op = assemble_frac_lap_1d(shape, s);

    Eigen::MatrixXd Lm = -c_ns * op.M;
    for (int i = 0; i < N; ++i) Lm(i, i) += well.d2W(phi.values[std::size_t(i)]);
    const auto& dphi = phi.slopes();
    const Profile1D g = corrector_rhs(phi, well, c0);
    const auto tw = phi.trapezoid_weights();

    Eigen::MatrixXd B(N + 1, N + 1);
    B.topLeftCorner(N, N) = Lm;
    for (int i = 0; i < N; ++i) {
        B(i, N) = dphi[std::size_t(i)];
        B(N, i) = tw[std::size_t(i)] * dphi[std::size_t(i)];
    }
    B(N, N) = 0.0;
    Eigen::VectorXd rhs(N + 1);
    for (int i = 0; i < N; ++i) rhs(i) = g.values[std::size_t(i)];
    rhs(N) = 0.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    CorrectorProfile out;
    out.rcond = lu.rcond();
    if (!(out.rcond > 1e-14))
        throw Error(where, strcat("bordered system is singular, reciprocal condition ", out.rcond));
    const Eigen::VectorXd x = lu.solve(rhs);

    std::vector<double> psi(x.data(), x.data() + N);
    std::vector<double> dp(dphi.begin(), dphi.end());
    const double beta = window_dot(phi, psi, dp) / window_dot(phi, dp, dp);
    for (int i = 0; i < N; ++i) psi[std::size_t(i)] -= beta * dp[std::size_t(i)];

    Eigen::Map<const Eigen::VectorXd> pv(psi.data(), N);
    Eigen::Map<const Eigen::VectorXd> gv(g.values.data(), N);
    Eigen::Map<const Eigen::VectorXd> dv(dp.data(), N);
    out.residual_norm = (Lm * pv - gv).lpNorm<Eigen::Infinity>();
    out.kernel_defect = (Lm * dv).lpNorm<Eigen::Infinity>();
    out.multiplier = x(N);
    out.orthogonality_defect = std::abs(window_dot(phi, psi, dp));
    out.psi_tilde.xi = phi.xi;
    out.psi_tilde.values = std::move(psi);
    out.psi_tilde.left = Tail::fixed(0.0);
    out.psi_tilde.right = Tail::fixed(0.0);
    return out;
}

/// Least-squares fit of log(1 - phi) = log(A) - p log(xi) over [a, b].
struct TailFit {
    double exponent = 0.0;
    double coefficient = 0.0;
};

inline TailFit fit_right_tail(const Profile1D& phi, double a, double b)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double x = phi.xi[i];
        if (x < a || x > b) continue;
        const double X = std::log(x), Y = std::log(1.0 - phi.values[i]);
        sx += X; sy += Y; sxx += X * X; sxy += X * Y;
        ++m;
    }
    if (m < 3) throw Error("fit_right_tail", "fewer than three samples in the fit window");
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    TailFit f;
    f.exponent = -slope;
    // coefficient of the leading term (1-phi) xi^{2s}, averaged over the window
    double acc = 0.0;
    int k = 0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double x = phi.xi[i];
        if (x < a || x > b) continue;
        acc += (1.0 - phi.values[i]) * std::pow(x, phi.right.p);
        ++k;
    }
    f.coefficient = acc / k;
    return f;
}

} // namespace fracflow
