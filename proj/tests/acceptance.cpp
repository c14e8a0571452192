// Acceptance report: one PASS/FAIL line per criterion, tolerances pinned below.
//
// The process exits 0 when every check ran to completion, whatever the
// verdicts; pass --strict to turn any FAIL into a non-zero exit.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "fracflow/allen_cahn.hpp"
#include "fracflow/barrier.hpp"
#include "fracflow/fmcf.hpp"
#include "fracflow/fracops.hpp"
#include "fracflow/geometry.hpp"
#include "fracflow/profiles.hpp"

using namespace fracflow;

namespace {

// ---- pinned tolerances -----------------------------------------------------
constexpr double kIdentityRel = 1e-3;        // 1: defect / |I_1 v|_inf at 512^2
constexpr double kIdentityGain = 1.8;        // 1: defect(256) / defect(512)
constexpr double kBallMomentRel = 5e-3;      // 2
constexpr double kLayerResidual = 1e-8;      // 3
constexpr double kTailExponentAbs = 0.03;    // 3
constexpr double kTailCoefficientRel = 0.05; // 3
constexpr double kMassAbs = 1e-6;            // 3
constexpr double kSolvability = 1e-8;        // 4
constexpr double kCorrectorResidual = 1e-6;  // 4
constexpr double kDecayFactor = 2.0;         // 4
constexpr double kSlopeAbs = 0.02;           // 5
constexpr double kOmegaAgreeRel = 0.01;      // 5
constexpr double kRadiusR2 = 0.999;          // 6
constexpr double kExtinctionRel = 0.05;      // 6
constexpr double kMaxPrinciple = 1e-10;      // 7
constexpr double kEnergyRel = 1e-9;          // 7
constexpr double kHausdorffFactor = 2.0;     // 8
constexpr double kNegativeAll = 0.95;        // 9
constexpr double kNegativeBand = 1.0;        // 9
constexpr double kConsistencyGain = 1.5;     // 10
// runtime budgets, seconds
constexpr double kBudget1 = 60, kBudget3 = 120, kBudget6 = 300, kBudget8 = 900;

constexpr double kS = 0.25;

int g_fail = 0;

void report(int id, bool ok, const std::string& detail)
{
    std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    g_fail += !ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// smooth compact bump of half-width a about 0, period 1
double bump(double t, double a)
{
    t -= std::round(t);
    const double x = t / a;
    if (std::abs(x) >= 1) return 0.0;
    return std::exp(1 - 1 / (1 - x * x));
}

struct Shared {
    DoubleWell well = DoubleWell::standard();
    FracOrder o2{kS, 2};
    double c_ns = 0.0;
    LayerResult layer;
    double layer_seconds = 0.0;
    double c0 = 0.0;
    double omega = 0.0;  // measured
};

void criterion1(const Shared& sh)
{
    const auto t0 = std::chrono::steady_clock::now();
    const double a = 0.3;
    const double lam1 = lambda_closed_form(FracOrder(kS, 1));
    const int M = 1 << 16;
    std::vector<double> v(M);
    for (int i = 0; i < M; ++i) v[std::size_t(i)] = bump(double(i) / M, a);
    const auto I1 = frac_lap_1d_spectral(v, 1.0, lam1, kS);
    const double I1max = sup_norm(I1);
    auto I1at = [&](double t) {
        t -= std::floor(t);
        const double x = t * M;
        const int i = int(x);
        const double f = x - i;
        return I1[std::size_t(i % M)] * (1 - f) + I1[std::size_t((i + 1) % M)] * f;
    };
    const int dirs[3][2] = {{1, 0}, {1, 1}, {2, 1}};
    double worst[2] = {0, 0};
    const int grids[2] = {256, 512};
    for (int g = 0; g < 2; ++g) {
        const int N = grids[g];
        KernelOptions op;
        op.periodize = true;
        op.moments = true;
        const auto W = make_kernel_weights(sh.o2, N, N, 1.0 / N, op);
        for (const auto& e : dirs) {
            ScalarField u = ScalarField::square(N, 1.0);
            for (int j = 0; j < N; ++j)
                for (int i = 0; i < N; ++i) u(i, j) = bump(e[0] * u.x(i) + e[1] * u.y(j), a);
            const auto Iu = frac_lap_nd_direct_field(u, *W);
            const double scale = std::pow(double(e[0] * e[0] + e[1] * e[1]), kS) * sh.c_ns;
            for (int j = 0; j < N; ++j)
                for (int i = 0; i < N; ++i)
                    worst[g] = std::max(worst[g], std::abs(Iu(i, j) - scale * I1at(e[0] * u.x(i) + e[1] * u.y(j))));
        }
    }
    const double rel = worst[1] / I1max, gain = worst[0] / worst[1], T = seconds_since(t0);
    report(1, rel <= kIdentityRel && gain >= kIdentityGain && T <= kBudget1,
           fmt("defect/|I1 v| = %.3e (<= %.0e), 256->512 gain %.2f (>= %.1f), %.1f s", rel, kIdentityRel, gain,
               kIdentityGain, T));
}

void criterion2()
{
    // default 1D resolution: the uniform profile grid (window [-50, 50], 4096 cells);
    // R is a quarter of the window, as for the 2D tables
    const double h = 100.0 / 4096, R = 25.0;
    const KernelWeights1D w(h, kS, int(R / h) + 2);
    const auto [sum, Reff] = w.ball_moment(R);
    const double exact = 2 * std::pow(Reff, 1 - 2 * kS) / (1 - 2 * kS);
    const double rel = std::abs(sum / exact - 1);
    report(2, rel <= kBallMomentRel,
           fmt("partial sum %.8f vs 2R^{1-2s}/(1-2s) = %.8f at R = %.4f, h = %.5f: rel %.2e (<= %.1e)", sum, exact,
               Reff, h, rel, kBallMomentRel));
}

void criterion3(const Shared& sh)
{
    const Profile1D& phi = sh.layer.phi;
    const double L = phi.xi.back();
    const auto fit = fit_right_tail(phi, 0.25 * L, L);
    const double expected = sh.c_ns / (2 * kS * sh.well.alpha);
    const double crel = std::abs(fit.coefficient / expected - 1);
    const double mass = layer_integrals(phi).int_dphi;
    const bool ok = sh.layer.residual <= kLayerResidual && std::abs(fit.exponent - 2 * kS) <= kTailExponentAbs &&
                    crel <= kTailCoefficientRel && phi(0.0) == 0.5 && std::abs(mass - 1) <= kMassAbs &&
                    sh.layer_seconds <= kBudget3;
    report(3, ok,
           fmt("residual %.2e, tail exponent %.5f, coefficient %.5f vs %.5f (rel %.1e), phi(0) = %.17g, "
               "int phi' - 1 = %.1e, %.1f s",
               sh.layer.residual, fit.exponent, fit.coefficient, expected, crel, phi(0.0), mass - 1,
               sh.layer_seconds));
}

void criterion4(const Shared& sh)
{
    const Profile1D& phi = sh.layer.phi;
    const double solv = solvability_integral(phi, sh.well, sh.c0);
    const auto cp = solve_corrector(phi, sh.well, sh.c0, sh.c_ns, kS);
    // |psi|(1 + xi^{2s}) on [L/2, L] against its value at L/2
    const double L = phi.xi.back();
    std::size_t ih = 0;
    for (std::size_t i = 0; i < phi.size(); ++i)
        if (phi.xi[i] <= 0.5 * L) ih = i;
    auto weight = [&](std::size_t i) {
        return std::abs(cp.psi_tilde.values[i]) * (1 + std::pow(phi.xi[i], 2 * kS));
    };
    double sup = 0.0;
    for (std::size_t i = ih; i < phi.size(); ++i) sup = std::max(sup, weight(i));
    const double ratio = sup / weight(ih);
    report(4, std::abs(solv) <= kSolvability && cp.residual_norm <= kCorrectorResidual && ratio <= kDecayFactor,
           fmt("|int g phi'| = %.2e, corrector residual %.2e, decay ratio on [L/2, L] %.3f (<= %.0f)", std::abs(solv),
               cp.residual_norm, ratio, kDecayFactor));
}

void criterion5(const Shared& sh)
{
    const int n = 512;
    const double radii[4] = {0.15, 0.2, 0.3, 0.4};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double r : radii) {
        const double h = 1.0 / n;
        const auto d = signed_distance_circle(n, 1.0, {0.5 + 0.3 * h, 0.5 + 0.1 * h}, r, 0.0, 6 * h);
        int bi = 0;
        const int bj = n / 2;
        double best = INFINITY;
        for (int i = n / 2; i < n; ++i)
            if (std::abs(d.field(i, bj)) < best) { best = std::abs(d.field(i, bj)); bi = i; }
        const auto k = kappa_at(d, bi, bj, kS);
        const double X = std::log(r - d.field(bi, bj)), Y = std::log(std::abs(k.kappa));
        sx += X; sy += Y; sxx += X * X; sxy += X * Y;
    }
    const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
    const auto est = omega_constant(sh.o2, {0.2, 0.4}, {256, 512, 1024});
    const double agree = std::abs(est.per_radius[0] / est.per_radius[1] - 1);
    report(5, std::abs(slope + 2 * kS) <= kSlopeAbs && agree <= kOmegaAgreeRel,
           fmt("slope %.5f (target %.2f +- %.2f), omega(0.2) = %.6f, omega(0.4) = %.6f, rel diff %.1e", slope,
               -2 * kS, kSlopeAbs, est.per_radius[0], est.per_radius[1], agree));
}

void criterion6(const Shared& sh)
{
    const auto t0 = std::chrono::steady_clock::now();
    FmcParams p;
    p.order = sh.o2;
    p.c0 = sh.c0;
    p.omega = sh.omega;
    p.move_fraction = 0.5;
    const auto b = run_circle_benchmark(0.4, p, 0.5, 512);
    const double T = seconds_since(t0);
    report(6, b.fit.r2 >= kRadiusR2 && b.fit.rel_error <= kExtinctionRel && T <= kBudget6,
           fmt("R^2 = %.8f, T_fit = %.6e vs T = %.6e (rel %.1e), %zu steps, %.1f s", b.fit.r2, b.fit.t_extinction,
               b.fit.t_extinction_exact, b.fit.rel_error, b.steps, T));
}

void criterion7(const Shared& sh)
{
    const int n = 128;
    const double eps = 0.04, rho = 0.08;
    ScalarField raw = ScalarField::square(n, 1.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) raw(i, j) = 0.3 - std::hypot(raw.x(i) - 0.5, raw.y(j) - 0.5);
    AcState st = well_prepared_init(extend_distance(raw, rho), sh.layer.phi, eps, sh.well, sh.o2);
    const double dt = default_ac_dt(eps, sh.o2);
    double slack = 0.0, worst = -INFINITY;
    double E = energy(st).total;
    for (int k = 0; k < 200; ++k) {
        ac_step(st, dt);
        for (double v : st.u.data) slack = std::max({slack, -v, v - 1});
        const double En = energy(st).total;
        worst = std::max(worst, (En - E) / std::abs(E));
        E = En;
    }
    bool fixed = true;
    for (double c : {0.0, 1.0}) {
        AcState k = st;
        std::fill(k.u.data.begin(), k.u.data.end(), c);
        for (int m = 0; m < 5; ++m) ac_step(k, dt);
        for (double v : k.u.data) fixed = fixed && v == c;
    }
    report(7, slack <= kMaxPrinciple && worst <= kEnergyRel && fixed,
           fmt("max excursion %.1e (<= %.0e), worst relative energy change %.2e (<= %.0e), 0/1 fixed: %s", slack,
               kMaxPrinciple, worst, kEnergyRel, fixed ? "exact" : "no"));
}

void criterion8(const Shared& sh)
{
    const auto t0 = std::chrono::steady_clock::now();
    ConvergenceParams p;
    p.n = 256;
    p.r0 = 0.35;
    p.t_fraction = 0.3;
    p.checkpoints = 1;
    p.flow.order = sh.o2;
    p.flow.c0 = sh.c0;
    p.flow.omega = sh.omega;
    p.flow.move_fraction = 0.5;
    const auto rows = convergence_experiment({0.08, 0.04, 0.02}, sh.layer.phi, sh.well, sh.o2, p);
    bool mono = true, in_mono = true;
    std::string list;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (k) {
            mono = mono && rows[k].hausdorff < rows[k - 1].hausdorff;
            in_mono = in_mono && rows[k].sup_in < rows[k - 1].sup_in;
        }
        list += fmt("%s%.6f", k ? "/" : "", rows[k].hausdorff);
    }
    const double factor = rows.front().hausdorff / rows.back().hausdorff, T = seconds_since(t0);
    report(8, mono && factor >= kHausdorffFactor && in_mono && T <= kBudget8,
           fmt("Hausdorff %s (monotone: %s), reduction %.4f (>= %.0f), sup|u-1| on K_in %.4f -> %.4f (%s), %.1f s",
               list.c_str(), mono ? "yes" : "no", factor, kHausdorffFactor, rows.front().sup_in, rows.back().sup_in,
               in_mono ? "decreasing" : "not decreasing", T));
}

void criteria9and10(const Shared& sh)
{
    const auto cp = solve_corrector(sh.layer.phi, sh.well, sh.c0, sh.c_ns, kS);
    CircleMotion mo;
    const int n = 256;
    const double ladder[3] = {0.08, 0.04, 0.02};
    double max_band[3], amk[3], opd[3];
    ResidualReport last;
    for (int k = 0; k < 3; ++k) {
        BarrierConfig cfg;
        cfg.epsilon = ladder[k];
        cfg.R = 0.25;
        auto rep = subsolution_residual(n, 1.0, mo, sh.layer.phi, cp.psi_tilde, sh.well, sh.c0, sh.omega, cfg);
        max_band[k] = rep.max_band;
        const auto con = a_eps_consistency(n, 1.0, mo, sh.layer.phi, sh.well, sh.omega, cfg, 0.5 * cfg.rho);
        amk[k] = con.a_minus_kappa;
        opd[k] = con.operator_defect;
        if (k == 2) last = std::move(rep);
    }
    const bool trend = max_band[1] < max_band[0] && max_band[2] < max_band[1];
    report(9, last.frac_negative >= kNegativeAll && last.frac_negative_band >= kNegativeBand && trend,
           fmt("eps = 0.02: J < 0 at %.2f%% of all points (>= %.0f%%), %.2f%% of band points (need 100%%); "
               "max band J %.3e / %.3e / %.3e (%s)",
               100 * last.frac_negative, 100 * kNegativeAll, 100 * last.frac_negative_band, max_band[0], max_band[1],
               max_band[2], trend ? "decreasing" : "not decreasing"));
    bool ok10 = true;
    for (int k = 1; k < 3; ++k)
        ok10 = ok10 && amk[k - 1] / amk[k] >= kConsistencyGain && opd[k - 1] / opd[k] >= kConsistencyGain;
    report(10, ok10,
           fmt("|a-kappa| %.4e / %.4e / %.4e, operator defect %.3e / %.3e / %.3e (each halving needs >= %.1fx)", amk[0],
               amk[1], amk[2], opd[0], opd[1], opd[2], kConsistencyGain));
}

} // namespace

int main(int argc, char** argv)
{
    const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
    Shared sh;
    sh.c_ns = FracConstants::get(sh.o2).c_ns;
    {
        const auto t0 = std::chrono::steady_clock::now();
        sh.layer = solve_layer(sh.well, sh.o2, sh.c_ns, default_layer_grid(sh.o2, sh.c_ns));
        sh.layer_seconds = seconds_since(t0);
    }
    sh.c0 = compute_c0(sh.layer.phi);
    sh.omega = omega_constant(sh.o2, {0.15, 0.2, 0.3, 0.4}, {256, 512}).omega;
    std::printf("s = %.2f, n = 2: C_ns = %.10f, c0 = %.6f, measured omega = %.8f\n", kS, sh.c_ns, sh.c0, sh.omega);

    const std::vector<std::function<void()>> checks{
        [&] { criterion1(sh); }, [&] { criterion2(); },      [&] { criterion3(sh); },
        [&] { criterion4(sh); }, [&] { criterion5(sh); },    [&] { criterion6(sh); },
        [&] { criterion7(sh); }, [&] { criterion8(sh); },    [&] { criteria9and10(sh); }};
    int errors = 0;
    for (std::size_t k = 0; k < checks.size(); ++k) {
        try {
            checks[k]();
        } catch (const std::exception& e) {
            std::printf("check %zu aborted: %s\n", k + 1, e.what());
            ++errors;
        }
    }
    std::printf("%d of 10 criteria failed\n", g_fail);
    if (errors) return 2;
    return strict && g_fail ? 1 : 0;
}
