#pragma once

// Fractional Allen-Cahn on the periodic box,
//   eps u_t = I_n^s u - eps^{-2s} W'(u),
// first-order semi-implicit: the operator implicit, W' explicit with a
// stabilizer S >= max W'' on [0,1].
//
// The multiplier is lambda * (-Delta_h)^s with the five-point discrete
// Laplacian symbol rather than lambda |k|^{2s}.  Both agree to O(h^2 k^4),
// but only the former is a subordinated Markov generator, so the implicit
// solve is positivity preserving and the scheme keeps u in [0,1] exactly.

#include <algorithm>
#include <cmath>
#include <vector>

#include "core.hpp"
#include "fft.hpp"
#include "fmcf.hpp"
#include "fracops.hpp"
#include "geometry.hpp"
#include "profile1d.hpp"
#include "profiles.hpp"

namespace fracflow {

struct AcState {
    ScalarField u;
    double t = 0.0;
    double epsilon = 0.0;
    DoubleWell well;
    FracOrder order{0.25, 2};
    double stabilizer = 1.0;
    std::size_t steps = 0;
};

struct EnergyReport {
    double gagliardo = 0.0;
    double potential = 0.0;
    double total = 0.0;
    double t = 0.0;
};

inline void check_resolvable(double epsilon, double h, const char* where)
{
    if (!(epsilon >= 4 * h * (1 - 1e-12)))
        throw Error(where, strcat("epsilon = ", epsilon, " is below four cells (h = ", h, ")"));
}

/// u0 = phi(d0 / eps).
inline AcState well_prepared_init(const SignedDistanceField& d0, const Profile1D& phi, double epsilon,
                                  const DoubleWell& well, const FracOrder& order)
{
    const char* where = "well_prepared_init";
    check_resolvable(epsilon, d0.field.h, where);
    AcState st;
    st.epsilon = epsilon;
    st.well = well;
    st.order = order;
    st.stabilizer = std::max(1.0, well.max_curvature);
    st.u = d0.field.like<double>();
    for (std::size_t k = 0; k < st.u.data.size(); ++k) st.u.data[k] = phi(d0.field.data[k] / epsilon);
    for (double v : st.u.data)
        if (!(v > 0 && v < 1)) throw Error(where, "initial datum leaves (0,1)");
    return st;
}

inline double default_ac_dt(double epsilon, const FracOrder& order)
{
    return 0.1 * std::pow(epsilon, 1 + 2 * order.s);
}

namespace detail {

/// lambda * (-Delta_h)^s symbol on the r2c half spectrum.
inline const std::vector<double>& ac_symbol(int nx, int ny, double h, const FracOrder& order)
{
    static std::map<std::tuple<int, int, double, double>, std::vector<double>> cache;
    auto& sym = cache[{nx, ny, h, order.s}];
    if (sym.empty()) {
        const double lam = FracConstants::get(order).spectral_symbol_coeff;
        auto& fft = Fft2::get(nx, ny);
        const int nxc = fft.nxc();
        sym.resize(std::size_t(nxc) * ny);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nxc; ++i) {
                const double kx = fft.kx(i, nx * h), ky = fft.ky(j, ny * h);
                const double sx = 2 / h * std::sin(0.5 * kx * h), sy = 2 / h * std::sin(0.5 * ky * h);
                sym[std::size_t(j) * nxc + i] = lam * std::pow(sx * sx + sy * sy, order.s);
            }
    }
    return sym;
}

} // namespace detail

/// One semi-implicit step.  The mean is advanced separately from the
/// fluctuation so that spatially constant roots of W' are exact fixed points.
inline void ac_step(AcState& st, double dt)
{
    const char* where = "ac_step";
    if (!(dt > 0)) throw Error(where, "dt must be positive");
    const int nx = st.u.nx, ny = st.u.ny;
    const double eps = st.epsilon, S = st.stabilizer;
    const double e2s = std::pow(eps, -2 * st.order.s);
    const double A = eps + dt * S * e2s;
    const std::size_t N = st.u.data.size();

    std::vector<double> rhs(N);
    double mean = 0.0, mean_w = 0.0;
    for (double v : st.u.data) mean += v;
    mean /= double(N);
    std::vector<double> w(N);
    for (std::size_t k = 0; k < N; ++k) {
        w[k] = st.well.dW(st.u.data[k]);
        mean_w += w[k];
    }
    mean_w /= double(N);
    bool flat = true;
    for (std::size_t k = 0; k < N; ++k) {
        rhs[k] = A * (st.u.data[k] - mean) - dt * e2s * (w[k] - mean_w);
        if (rhs[k] != 0.0) flat = false;
    }
    const double new_mean = (A * mean - dt * e2s * mean_w) / A;
    if (flat) {
        std::fill(st.u.data.begin(), st.u.data.end(), new_mean);
    } else {
        auto& fft = Fft2::get(nx, ny);
        auto F = fft.forward(rhs);
        const auto& sym = detail::ac_symbol(nx, ny, st.u.h, st.order);
        for (std::size_t k = 0; k < F.size(); ++k) F[k] /= (A + dt * sym[k]);
        F[0] = 0.0;
        auto v = fft.inverse(F);
        for (std::size_t k = 0; k < N; ++k) st.u.data[k] = new_mean + v[k];
    }
    double lo = INFINITY, hi = -INFINITY;
    for (double v : st.u.data) {
        if (!std::isfinite(v)) throw Error(where, "non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo < -1e-10 || hi > 1 + 1e-10)
        throw Error(where, strcat("maximum principle violated: range [", lo, ", ", hi, "]"));
    st.t += dt;
    ++st.steps;
}

/// Discrete energy whose gradient flow the scheme discretizes.
inline EnergyReport energy(const AcState& st)
{
    const int nx = st.u.nx, ny = st.u.ny;
    auto& fft = Fft2::get(nx, ny);
    const auto F = fft.forward(st.u.data);
    const auto& sym = detail::ac_symbol(nx, ny, st.u.h, st.order);
    const int nxc = fft.nxc();
    double g = 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nxc; ++i) {
            const std::size_t k = std::size_t(j) * nxc + i;
            const double mult = (i == 0 || (nx % 2 == 0 && i == nx / 2)) ? 1.0 : 2.0;
            g += mult * sym[k] * std::norm(F[k]);
        }
    const double h2 = st.u.h * st.u.h;
    EnergyReport r;
    r.gagliardo = 0.5 * h2 / (double(nx) * ny) * g;
    double p = 0.0;
    for (double v : st.u.data) p += st.well.W(v);
    r.potential = std::pow(st.epsilon, -2 * st.order.s) * h2 * p;
    r.total = r.gagliardo + r.potential;
    r.t = st.t;
    return r;
}

inline FrontCurve diffuse_front(const AcState& st)
{
    return extract_front(st.u, 0.5);
}

// ---------------------------------------------------------------------------

struct ConvergenceParams {
    int n = 256;
    double box = 1.0;
    Vec2 centre{0.5, 0.5};
    double r0 = 0.35;        // empty seed if r0 <= 0
    double rho = 0.08;       // smoothness band of the initial distance
    double t_fraction = 0.3; // of the extinction time of the seed
    int checkpoints = 3;
    double k_in = 1.0 / 3;   // K_in = disc of radius k_in * r0
    double k_out = 0.1;      // K_out = |x - centre| >= r0 + k_out
    FmcParams flow;          // c0, omega, ... for the geometric reference
};

struct ConvergenceRow {
    double epsilon, t, hausdorff, sup_in, sup_out, r_diffuse, r_sharp;
    std::size_t steps;
};

inline std::vector<ConvergenceRow> convergence_experiment(const std::vector<double>& epsilons, const Profile1D& phi,
                                                          const DoubleWell& well, const FracOrder& order,
                                                          const ConvergenceParams& p)
{
    const char* where = "convergence_experiment";
    const double h = p.box / p.n;
    {
        std::vector<double> bad;
        for (double e : epsilons)
            if (e < 4 * h * (1 - 1e-12)) bad.push_back(e);
        if (!bad.empty()) {
            std::string feasible;
            for (double e : epsilons)
                if (e >= 4 * h * (1 - 1e-12)) feasible += strcat(feasible.empty() ? "" : ", ", e);
            throw Error(where, strcat("epsilon below four cells; feasible ladder: {", feasible, "}"));
        }
    }
    const bool empty_seed = !(p.r0 > 0);
    ScalarField raw = ScalarField::square(p.n, p.box);
    for (int j = 0; j < p.n; ++j)
        for (int i = 0; i < p.n; ++i)
            raw(i, j) = empty_seed ? -2 * p.rho : p.r0 - std::hypot(raw.x(i) - p.centre.x, raw.y(j) - p.centre.y);
    const SignedDistanceField d0 = extend_distance(raw, p.rho);

    // time horizon and checkpoints
    double T = 1.0;
    if (!empty_seed) {
        const double q = 1 + 2 * order.s;
        T = std::pow(p.r0, q) / (q * p.flow.c0 * p.flow.omega);
    }
    const double t_end = p.t_fraction * T;
    std::vector<double> marks;
    for (int c = 1; c <= p.checkpoints; ++c) marks.push_back(t_end * c / p.checkpoints);

    // sharp reference: the level-set flow on the same grid
    std::vector<FrontCurve> sharp;
    if (!empty_seed) {
        FlowState fs = make_flow(signed_distance_circle(p.n, p.box, p.centre, p.r0, 0.0, 6 * h), p.flow);
        for (double tm : marks) {
            while (fs.t < tm && fs.status == FlowStatus::Active) {
                evaluate_front_curvature(fs);
                const double dt = std::min(accuracy_dt(fs), tm - fs.t);
                step(fs, dt);
            }
            sharp.push_back(extract_front(fs.u, 0.0));
        }
    }

    std::vector<ConvergenceRow> rows;
    for (double eps : epsilons) {
        AcState st = well_prepared_init(d0, phi, eps, well, order);
        const double dt0 = default_ac_dt(eps, order);
        for (std::size_t c = 0; c < marks.size(); ++c) {
            while (st.t < marks[c] * (1 - 1e-14)) ac_step(st, std::min(dt0, marks[c] - st.t));
            ConvergenceRow row{eps, st.t, NAN, 0.0, 0.0, 0.0, 0.0, st.steps};
            for (int j = 0; j < p.n; ++j)
                for (int i = 0; i < p.n; ++i) {
                    const double rr = std::hypot(st.u.x(i) - p.centre.x, st.u.y(j) - p.centre.y);
                    if (!empty_seed && rr <= p.k_in * p.r0) row.sup_in = std::max(row.sup_in, std::abs(st.u(i, j) - 1));
                    if (empty_seed || rr >= p.r0 + p.k_out) row.sup_out = std::max(row.sup_out, std::abs(st.u(i, j)));
                }
            const FrontCurve fd = diffuse_front(st);
            row.r_diffuse = mean_radius(fd, p.centre);
            if (!empty_seed) {
                row.r_sharp = mean_radius(sharp[c], p.centre);
                if (!fd.empty() && !sharp[c].empty()) row.hausdorff = hausdorff(fd, sharp[c]);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

} // namespace fracflow
