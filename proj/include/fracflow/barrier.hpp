#pragma once

// Auxiliary fields a_eps = b_eps + c_eps, the cutoff mu, the assembled
// barrier v^eps and its residual
//   J[v] = eps v_t - I_n^s v + eps^{-2s} W'(v)
// for a circle shrinking at constant speed.

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "core.hpp"
#include "fracops.hpp"
#include "geometry.hpp"
#include "profile1d.hpp"
#include "profiles.hpp"

namespace fracflow {

struct BarrierConfig {
    double epsilon = 0.02;
    double delta = 0.0;        // 0 -> eps^0.4
    double sigma = 0.03;
    double alpha = 1.0;        // W''(0)
    double R = 0.25;           // truncation of b_eps
    double rho = 0.08;
    FracOrder order{0.25, 2};

    double sigma_tilde() const { return sigma / alpha; }

    /// Fills derived values and checks every constraint, reporting all violations at once.
    void resolve(double box, double h)
    {
        if (delta == 0.0) delta = std::pow(epsilon, 0.4);
        std::vector<std::string> bad;
        if (!(epsilon > 0)) bad.push_back("epsilon must be positive");
        if (!(delta > 0 && delta < 1)) bad.push_back("delta must lie in (0,1)");
        if (!(sigma > 0 && sigma < 1)) bad.push_back("sigma must lie in (0,1)");
        if (!(alpha > 0)) bad.push_back("alpha must be positive");
        if (!(sigma_tilde() < rho / 2)) bad.push_back("sigma/alpha must be below rho/2");
        if (!(R <= 0.25 * box * (1 + 1e-12))) bad.push_back("R must not exceed a quarter of the box");
        if (!(epsilon >= 4 * h * (1 - 1e-12))) bad.push_back("epsilon below four cells");
        if (!(rho > 2 * h)) bad.push_back("rho below two cells");
        if (!bad.empty()) {
            std::string msg;
            for (const auto& b : bad) msg += (msg.empty() ? "" : "; ") + b;
            throw Error("BarrierConfig", msg);
        }
        order.validate();
    }
};

struct AuxFields {
    ScalarField b_eps, c_eps, a_eps, mu;
};

namespace detail {

inline void central_gradient(const ScalarField& d, int i, int j, double& gx, double& gy)
{
    gx = (d.wrap(i + 1, j) - d.wrap(i - 1, j)) / (2 * d.h);
    gy = (d.wrap(i, j + 1) - d.wrap(i, j - 1)) / (2 * d.h);
}

/// \int_{|z|<R} [phi((a + g.z)/eps) - phi(a/eps)] |z|^{-2-2s} dz for |g| = gn,
/// written as a 1D integral against k_R(t) = \int_{|y| < sqrt(R^2 - t^2)} (t^2 + y^2)^{-1-s} dy.
inline double affine_part(const Profile1D& phi, double a, double gn, double eps, double R, double s,
                          const KernelPrimitive& P)
{
    if (gn == 0.0) return 0.0;
    const double p0 = phi(a / eps);
    auto f = [&](double t) {
        if (t <= 0) return 0.0;
        const double kr = 2 * std::pow(t, -1 - 2 * s) * (t >= R ? 0.0 : P.F(std::sqrt(R * R - t * t) / t));
        return (phi((a + gn * t) / eps) + phi((a - gn * t) / eps) - 2 * p0) * kr;
    };
    // fixed Gauss-Legendre on geometric panels refined towards the origin; the
    // integrand is O(t^{1-2s}) there and smooth on each panel
    using GL = boost::math::quadrature::gauss<double, 10>;
    double acc = 0.0;
    double hi = R;
    for (int panel = 0; panel < 14; ++panel) {
        const double lo = panel == 13 ? 0.0 : 0.35 * hi;
        acc += GL::integrate(f, lo, hi);
        hi = lo;
    }
    return acc;
}

} // namespace detail

/// b_eps[d](x) = \int_{|z|<R} [phi(d(x+z)/eps) - phi((d(x) + grad d(x).z)/eps)] |z|^{-2-2s} dz.
inline ScalarField compute_b_eps(const SignedDistanceField& d, const Profile1D& phi, const BarrierConfig& cfg)
{
    const ScalarField& D = d.field;
    const double s = cfg.order.s, eps = cfg.epsilon;
    if (!(eps >= 4 * D.h * (1 - 1e-12))) throw Error("compute_b_eps", "epsilon below four cells");
    ScalarField Phi = D.like<double>();
    for (std::size_t k = 0; k < Phi.data.size(); ++k) Phi.data[k] = phi(D.data[k] / eps);
    KernelOptions ko;
    ko.r_max = cfg.R;
    ko.moments = true;
    const auto w = make_kernel_weights(cfg.order, D.nx, D.ny, D.h, ko);
    ScalarField b = frac_lap_nd_direct_field(Phi, *w);
    const detail::KernelPrimitive P(s);
    for (int j = 0; j < D.ny; ++j)
        for (int i = 0; i < D.nx; ++i) {
            double gx, gy;
            detail::central_gradient(D, i, j, gx, gy);
            b(i, j) -= detail::affine_part(phi, D(i, j), std::hypot(gx, gy), eps, cfg.R, s, P);
        }
    return b;
}

/// c_eps = eps^{-2s} [ (|grad d|^2 + eps^{2 + 2s/(1-2s)})^s - 1 ] W'(phi(d/eps)).
inline ScalarField compute_c_eps(const SignedDistanceField& d, const Profile1D& phi, const DoubleWell& well,
                                 const BarrierConfig& cfg)
{
    const ScalarField& D = d.field;
    const double s = cfg.order.s, eps = cfg.epsilon;
    const double reg = std::pow(eps, 2 + 2 * s / (1 - 2 * s));
    ScalarField c = D.like<double>();
    for (int j = 0; j < D.ny; ++j)
        for (int i = 0; i < D.nx; ++i) {
            double gx, gy;
            detail::central_gradient(D, i, j, gx, gy);
            const double g2 = gx * gx + gy * gy;
            c(i, j) = std::pow(eps, -2 * s) * (std::pow(g2 + reg, s) - 1) * well.dW(phi(D(i, j) / eps));
        }
    return c;
}

inline double mu_value(double dval, const BarrierConfig& cfg)
{
    const double a = std::abs(dval), dl = cfg.delta;
    const double top = cfg.sigma / std::pow(dl, 2 * cfg.order.s);
    if (a <= dl) return cfg.sigma;
    if (a >= 2 * dl) return top;
    return cfg.sigma + (top - cfg.sigma) * smoothstep5((a - dl) / dl);
}

inline ScalarField build_mu(const SignedDistanceField& d, const BarrierConfig& cfg)
{
    ScalarField m = d.field.like<double>();
    for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] = mu_value(d.field.data[k], cfg);
    return m;
}

inline AuxFields compute_aux(const SignedDistanceField& d, const Profile1D& phi, const DoubleWell& well,
                             const BarrierConfig& cfg)
{
    AuxFields a;
    a.b_eps = compute_b_eps(d, phi, cfg);
    a.c_eps = compute_c_eps(d, phi, well, cfg);
    a.a_eps = a.b_eps;
    for (std::size_t k = 0; k < a.a_eps.data.size(); ++k) a.a_eps.data[k] += a.c_eps.data[k];
    a.mu = build_mu(d, cfg);
    return a;
}

/// d - sigma~ as a distance field (same band).
inline SignedDistanceField shifted(const SignedDistanceField& d, double by)
{
    SignedDistanceField o = d;
    for (auto& v : o.field.data) v -= by;
    return o;
}

/// v = phi(xi) + eps^{2s} psi~(xi) (mu - a) + (eps^{2s}/alpha)(a - mu), xi = (d - sigma~)/eps,
/// with a and mu evaluated on d - sigma~ (aux must be built from the shifted field).
inline ScalarField assemble_barrier(const SignedDistanceField& d, const Profile1D& phi, const Profile1D& psi_tilde,
                                    const AuxFields& aux, const BarrierConfig& cfg)
{
    const ScalarField& D = d.field;
    if (!D.same_grid(aux.a_eps) || !D.same_grid(aux.mu)) throw Error("assemble_barrier", "ingredient grid mismatch");
    const double eps = cfg.epsilon, e2s = std::pow(eps, 2 * cfg.order.s), st = cfg.sigma_tilde();
    ScalarField v = D.like<double>();
    for (std::size_t k = 0; k < v.data.size(); ++k) {
        const double xi = (D.data[k] - st) / eps;
        const double gap = aux.mu.data[k] - aux.a_eps.data[k];
        v.data[k] = phi(xi) + e2s * psi_tilde(xi) * gap - e2s / cfg.alpha * gap;
    }
    return v;
}

struct ResidualReport {
    ScalarField J;
    ScalarField audit;        // J - [phi'(d_t - c0 a + c0 mu) - mu]
    double frac_negative = 0.0;
    double frac_negative_band = 0.0;
    double max_band = 0.0;
    double max_far = 0.0;
    double median = 0.0;
    double p05 = 0.0, p95 = 0.0;
    double audit_band_max = 0.0;
    std::size_t band_points = 0;
    double speed = 0.0;       // C of the forced motion
    double dt_difference = 0.0;
};

struct CircleMotion {
    Vec2 centre{0.5, 0.5};
    double r = 0.3;
    double r_min = 0.15;
};

/// Residual of the barrier for d(t,x) = r - C t - |x - x0| at t = 0, with
/// C = 4^{2s} c0 omega / r_min^{2s} + c0 sigma + margin.
inline ResidualReport subsolution_residual(int n, double box, const CircleMotion& mo, const Profile1D& phi,
                                           const Profile1D& psi_tilde, const DoubleWell& well, double c0,
                                           double omega, BarrierConfig cfg, double margin = 0.0)
{
    const char* where = "subsolution_residual";
    const double h = box / n;
    cfg.resolve(box, h);
    const double s = cfg.order.s, eps = cfg.epsilon, st = cfg.sigma_tilde();
    ResidualReport rep;
    rep.speed = std::pow(4.0, 2 * s) * c0 * omega / std::pow(mo.r_min, 2 * s) + c0 * cfg.sigma + margin;
    // centred differencing step: eps^2, limited so the circle moves by at most a tenth of a cell
    rep.dt_difference = std::min(eps * eps, 0.1 * h / rep.speed);
    const double Dt = rep.dt_difference;

    auto dist_at = [&](double t) {
        ScalarField raw = ScalarField::square(n, box);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                raw(i, j) = mo.r - rep.speed * t - std::hypot(raw.x(i) - mo.centre.x, raw.y(j) - mo.centre.y);
        return extend_distance(raw, cfg.rho);
    };
    auto barrier_at = [&](double t, AuxFields* keep) {
        const auto d = dist_at(t);
        const auto ds = shifted(d, st);
        AuxFields aux = compute_aux(ds, phi, well, cfg);
        ScalarField v = assemble_barrier(d, phi, psi_tilde, aux, cfg);
        if (keep) *keep = aux;
        return v;
    };
    AuxFields aux0;
    const ScalarField v0 = barrier_at(0.0, &aux0);
    const ScalarField vp = barrier_at(Dt, nullptr), vm = barrier_at(-Dt, nullptr);
    const auto d0 = dist_at(0.0), dp = dist_at(Dt), dm = dist_at(-Dt);
    const ScalarField Iv = frac_lap_nd_spectral(v0, cfg.order, FracConstants::get(cfg.order));

    rep.J = v0.like<double>();
    rep.audit = v0.like<double>();
    std::vector<double> all;
    all.reserve(v0.data.size());
    std::size_t neg = 0, negb = 0;
    rep.max_band = -INFINITY;
    rep.max_far = -INFINITY;
    for (std::size_t k = 0; k < v0.data.size(); ++k) {
        const double vt = (vp.data[k] - vm.data[k]) / (2 * Dt);
        const double J = eps * vt - Iv.data[k] + std::pow(eps, -2 * s) * well.dW(v0.data[k]);
        if (!std::isfinite(J)) throw Error(where, "non-finite residual");
        rep.J.data[k] = J;
        const double dd = (dp.field.data[k] - dm.field.data[k]) / (2 * Dt);
        const double xi = (d0.field.data[k] - st) / eps;
        const double grouped =
            phi.deriv(xi) * (dd - c0 * aux0.a_eps.data[k] + c0 * aux0.mu.data[k]) - aux0.mu.data[k];
        rep.audit.data[k] = J - grouped;
        all.push_back(J);
        neg += J < 0;
        const bool band = std::abs(d0.field.data[k] - st) < cfg.delta;
        if (band) {
            ++rep.band_points;
            negb += J < 0;
            rep.max_band = std::max(rep.max_band, J);
            rep.audit_band_max = std::max(rep.audit_band_max, std::abs(rep.audit.data[k]));
        } else {
            rep.max_far = std::max(rep.max_far, J);
        }
    }
    rep.frac_negative = double(neg) / double(all.size());
    rep.frac_negative_band = rep.band_points ? double(negb) / double(rep.band_points) : 0.0;
    std::sort(all.begin(), all.end());
    auto pct = [&](double q) { return all[std::min(all.size() - 1, std::size_t(q * double(all.size() - 1)))]; };
    rep.median = pct(0.5);
    rep.p05 = pct(0.05);
    rep.p95 = pct(0.95);
    return rep;
}

struct ConsistencyReport {
    double a_minus_kappa = 0.0;        // max over band points of |a_eps - kappa|
    double operator_defect = 0.0;      // max |I[phi(d/eps)] - eps^{-2s} W'(phi(d/eps)) - a_eps|
    std::size_t band_points = 0;
};

/// a_eps against the curvature of the level circles (kappa = -omega (r - d)^{-2s})
/// and against the n-dimensional / one-dimensional operator difference.
/// Band points: |d| <= band.
inline ConsistencyReport a_eps_consistency(int n, double box, const CircleMotion& mo, const Profile1D& phi,
                                           const DoubleWell& well, double omega, BarrierConfig cfg, double band)
{
    const double h = box / n;
    cfg.resolve(box, h);
    const double s = cfg.order.s, eps = cfg.epsilon;
    ScalarField raw = ScalarField::square(n, box);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) raw(i, j) = mo.r - std::hypot(raw.x(i) - mo.centre.x, raw.y(j) - mo.centre.y);
    const auto d = extend_distance(raw, cfg.rho);
    const AuxFields aux = compute_aux(d, phi, well, cfg);
    ScalarField Phi = d.field.like<double>();
    for (std::size_t k = 0; k < Phi.data.size(); ++k) Phi.data[k] = phi(d.field.data[k] / eps);
    const ScalarField I = frac_lap_nd_spectral(Phi, cfg.order, FracConstants::get(cfg.order));
    ConsistencyReport rep;
    for (std::size_t k = 0; k < Phi.data.size(); ++k) {
        const double dv = d.field.data[k];
        if (!(std::abs(dv) <= band)) continue;
        ++rep.band_points;
        const double kappa = -omega * std::pow(mo.r - dv, -2 * s);
        rep.a_minus_kappa = std::max(rep.a_minus_kappa, std::abs(aux.a_eps.data[k] - kappa));
        const double defect = I.data[k] - std::pow(eps, -2 * s) * well.dW(Phi.data[k]) - aux.a_eps.data[k];
        rep.operator_defect = std::max(rep.operator_defect, std::abs(defect));
    }
    return rep;
}

} // namespace fracflow
