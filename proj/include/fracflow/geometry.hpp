#pragma once

// Signed distance fields, level-set extraction, and the nonlocal curvature
//   kappa(x) = P.V. \int (1{d(x+z) > d(x)} - 1/2) |z|^{-2-2s} dz
// split as kappa_plus - kappa_minus relative to the tangent half-plane.
//
// Curvature is evaluated on the extracted level curve rather than by summing
// indicators over grid cells.  Away from the evaluation point the kernel
// integral over the set is turned into a boundary flux (|z|^{-2-2s} is the
// divergence of -z|z|^{-2-2s}/(2s)), which is exact for a polygon; inside a
// small ball the curve is replaced by a local polynomial fit and the
// horn-shaped region between curve and tangent is integrated directly.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "core.hpp"
#include "fft.hpp"
#include "fracops.hpp"

namespace fracflow {

struct Vec2 {
    double x = 0.0, y = 0.0;
};
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double c, Vec2 a) { return {c * a.x, c * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }  // rotate by +90 degrees

/// Ordered polyline; the positive region lies on the left.
struct Polyline {
    std::vector<Vec2> pts;
    bool closed = false;
    std::size_t nseg() const { return pts.size() < 2 ? 0 : (closed ? pts.size() : pts.size() - 1); }
    Vec2 seg_a(std::size_t k) const { return pts[k]; }
    Vec2 seg_b(std::size_t k) const { return pts[(k + 1) % pts.size()]; }
};

struct FrontCurve {
    std::vector<Polyline> curves;
    bool empty() const { return curves.empty(); }
    std::size_t num_points() const
    {
        std::size_t n = 0;
        for (const auto& c : curves) n += c.pts.size();
        return n;
    }
};

/// Signed area enclosed (positive for counter-clockwise closed curves).
inline double enclosed_area(const FrontCurve& f)
{
    double a = 0.0;
    for (const auto& c : f.curves) {
        if (!c.closed) continue;
        for (std::size_t k = 0; k < c.nseg(); ++k) a += 0.5 * cross(c.seg_a(k), c.seg_b(k));
    }
    return a;
}

// ---------------------------------------------------------------------------
// distance fields

struct SignedDistanceField {
    ScalarField field;  // extended distance, |d| <= 2 rho
    double rho = 0.0;
    double clamp_level() const { return 2 * rho; }
};

/// Blend d~ -> d~ eta + 2 rho sign(d~) (1 - eta), eta = 1 on |d~| <= rho and
/// 0 on |d~| >= 2 rho.
inline double extend_value(double dt, double rho)
{
    const double a = std::abs(dt);
    if (a <= rho) return dt;
    if (a >= 2 * rho) return dt > 0 ? 2 * rho : -2 * rho;
    const double eta = 1.0 - smoothstep5((a - rho) / rho);
    const double v = 2 * rho + (a - 2 * rho) * eta;
    return dt > 0 ? v : -v;
}

inline SignedDistanceField extend_distance(const ScalarField& raw, double rho)
{
    if (!(rho > 2 * raw.h))
        throw Error("extend_distance", strcat("rho = ", rho, " is not larger than two cells (h = ", raw.h, ")"));
    SignedDistanceField d;
    d.rho = rho;
    d.field = raw;
    for (auto& v : d.field.data) v = extend_value(v, rho);
    return d;
}

/// d(x) = radius - offset - |x - center| on an n x n grid of the given box,
/// then extended.  Grid nodes sit at x0 + i h.
inline SignedDistanceField signed_distance_circle(int n, double box, Vec2 center, double radius, double offset,
                                                  double rho)
{
    const char* where = "signed_distance_circle";
    const double r = radius - offset;
    const double margin = 4 * rho;
    if (!(r > 0)) throw Error(where, "non-positive radius");
    if (center.x - r - margin < 0 || center.x + r + margin > box || center.y - r - margin < 0 ||
        center.y + r + margin > box)
        throw Error(where, "circle does not fit in the box with a margin of 4 rho");
    ScalarField raw = ScalarField::square(n, box);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) raw(i, j) = r - std::hypot(raw.x(i) - center.x, raw.y(j) - center.y);
    return extend_distance(raw, rho);
}

// ---------------------------------------------------------------------------
// marching squares

/// Level curves {field = level}.  Values above the level count as inside; the
/// field is not wrapped, so curves touching the box edge come out open.
inline FrontCurve extract_front(const ScalarField& f, double level)
{
    const int nx = f.nx, ny = f.ny;
    // edge keys: horizontal edge (i,j)-(i+1,j) -> 2*(j*nx+i), vertical (i,j)-(i,j+1) -> 2*(j*nx+i)+1
    auto hkey = [&](int i, int j) { return 2 * (std::int64_t(j) * nx + i); };
    auto vkey = [&](int i, int j) { return 2 * (std::int64_t(j) * nx + i) + 1; };
    std::unordered_map<std::int64_t, Vec2> point;
    auto edge_point = [&](std::int64_t key, int ia, int ja, int ib, int jb) {
        auto it = point.find(key);
        if (it != point.end()) return;
        const double va = f(ia, ja) - level, vb = f(ib, jb) - level;
        double t = va / (va - vb);
        // refine with the cubic through the two neighbours along the edge line
        const int di = ib - ia, dj = jb - ja;
        const int im = ia - di, jm = ja - dj, ip = ib + di, jp = jb + dj;
        if (im >= 0 && jm >= 0 && ip < nx && jp < ny) {
            const double vm = f(im, jm) - level, vp = f(ip, jp) - level;
            auto cubic = [&](double x) {
                return -vm * x * (x - 1) * (x - 2) / 6 + va * (x + 1) * (x - 1) * (x - 2) / 2 -
                       vb * (x + 1) * x * (x - 2) / 2 + vp * (x + 1) * x * (x - 1) / 6;
            };
            double lo = 0, hi = 1;
            const bool sa = va > 0;
            for (int it = 0; it < 52; ++it) {
                const double mid = 0.5 * (lo + hi);
                if ((cubic(mid) > 0) == sa) lo = mid;
                else hi = mid;
            }
            t = 0.5 * (lo + hi);
        }
        point[key] = {f.x(ia) + t * (f.x(ib) - f.x(ia)), f.y(ja) + t * (f.y(jb) - f.y(ja))};
    };
    struct Seg {
        std::int64_t a, b;
    };
    std::vector<Seg> segs;
    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            const int ci[4] = {i, i + 1, i + 1, i};
            const int cj[4] = {j, j, j + 1, j + 1};
            bool pos[4];
            int np = 0;
            for (int c = 0; c < 4; ++c) {
                pos[c] = f(ci[c], cj[c]) > level;
                np += pos[c];
            }
            if (np == 0 || np == 4) continue;
            const std::int64_t ek[4] = {hkey(i, j), vkey(i + 1, j), hkey(i, j + 1), vkey(i, j)};
            // walk the edges counter-clockwise, recording exits (+ -> -) and entries (- -> +)
            std::array<std::int64_t, 4> X{}, E{};
            std::array<int, 4> Xe{}, Ee{};
            int nX = 0, nE = 0;
            for (int e = 0; e < 4; ++e) {
                const int a = e, b = (e + 1) % 4;
                if (pos[a] == pos[b]) continue;
                edge_point(ek[e], ci[a], cj[a], ci[b], cj[b]);
                if (pos[a]) { Xe[nX] = e; X[nX++] = ek[e]; }
                else { Ee[nE] = e; E[nE++] = ek[e]; }
            }
            if (nX == 1) {
                segs.push_back({X[0], E[0]});
                continue;
            }
            // saddle: connect each exit with the next entry ccw when the centre is inside,
            // with the previous entry otherwise
            double centre = 0.25 * (f(i, j) + f(i + 1, j) + f(i + 1, j + 1) + f(i, j + 1));
            const bool cpos = centre > level;
            for (int k = 0; k < 2; ++k) {
                const int e = Xe[k];
                int best = -1, bestd = 9;
                for (int m = 0; m < 2; ++m) {
                    int dd = cpos ? (Ee[m] - e + 4) % 4 : (e - Ee[m] + 4) % 4;
                    if (dd < bestd) { bestd = dd; best = m; }
                }
                segs.push_back({X[k], E[best]});
            }
        }
    }
    // link segments into chains
    std::unordered_map<std::int64_t, std::size_t> by_start, by_end;
    for (std::size_t k = 0; k < segs.size(); ++k) {
        by_start[segs[k].a] = k;
        by_end[segs[k].b] = k;
    }
    std::vector<char> used(segs.size(), 0);
    FrontCurve out;
    for (std::size_t k0 = 0; k0 < segs.size(); ++k0) {
        if (used[k0]) continue;
        // rewind to the beginning of an open chain
        std::size_t k = k0;
        for (std::size_t guard = 0; guard < segs.size(); ++guard) {
            auto it = by_end.find(segs[k].a);
            if (it == by_end.end() || used[it->second] || it->second == k0) break;
            k = it->second;
        }
        Polyline pl;
        const std::size_t first = k;
        pl.pts.push_back(point[segs[k].a]);
        while (true) {
            used[k] = 1;
            auto it = by_start.find(segs[k].b);
            if (it == by_start.end()) {
                pl.pts.push_back(point[segs[k].b]);
                break;
            }
            if (it->second == first) {
                pl.closed = true;
                break;
            }
            if (used[it->second]) {
                pl.pts.push_back(point[segs[k].b]);
                break;
            }
            pl.pts.push_back(point[segs[k].b]);
            k = it->second;
        }
        // drop coincident consecutive points (level hitting a node exactly)
        Polyline clean;
        clean.closed = pl.closed;
        const double tiny = 1e-9 * f.h;
        for (const Vec2& p : pl.pts)
            if (clean.pts.empty() || norm(p - clean.pts.back()) > tiny) clean.pts.push_back(p);
        if (clean.closed && clean.pts.size() > 1 && norm(clean.pts.front() - clean.pts.back()) <= tiny)
            clean.pts.pop_back();
        if (clean.pts.size() >= 2) out.curves.push_back(std::move(clean));
    }
    return out;
}

// ---------------------------------------------------------------------------
// distances between curves

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b)
{
    const Vec2 ab = b - a;
    const double L2 = dot(ab, ab);
    double t = L2 > 0 ? dot(p - a, ab) / L2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

inline double point_curve_distance(Vec2 p, const FrontCurve& c)
{
    double best = INFINITY;
    for (const auto& pl : c.curves) {
        if (pl.pts.size() == 1) best = std::min(best, norm(p - pl.pts[0]));
        for (std::size_t k = 0; k < pl.nseg(); ++k) best = std::min(best, point_segment_distance(p, pl.seg_a(k), pl.seg_b(k)));
    }
    return best;
}

/// Symmetric Hausdorff distance using vertices and segment midpoints.
inline double hausdorff(const FrontCurve& a, const FrontCurve& b)
{
    if (a.empty() || b.empty()) throw Error("hausdorff", "empty curve");
    auto one_side = [](const FrontCurve& p, const FrontCurve& q) {
        double m = 0.0;
        for (const auto& pl : p.curves) {
            for (const Vec2& v : pl.pts) m = std::max(m, point_curve_distance(v, q));
            for (std::size_t k = 0; k < pl.nseg(); ++k)
                m = std::max(m, point_curve_distance(0.5 * (pl.seg_a(k) + pl.seg_b(k)), q));
        }
        return m;
    };
    return std::max(one_side(a, b), one_side(b, a));
}

/// Nearest point of a front for every node within `band` of it.
struct FrontFoot {
    int curve = -1;
    int seg = -1;
    double t = 0.0;
    double dist = INFINITY;
};

inline std::vector<FrontFoot> nearest_front_points(const FrontCurve& f, const ScalarField& grid, double band)
{
    std::vector<FrontFoot> foot(grid.data.size());
    for (std::size_t c = 0; c < f.curves.size(); ++c) {
        const auto& pl = f.curves[c];
        for (std::size_t k = 0; k < pl.nseg(); ++k) {
            const Vec2 a = pl.seg_a(k), b = pl.seg_b(k), ab = b - a;
            const double L2 = dot(ab, ab);
            const int i0 = std::max(0, int(std::floor((std::min(a.x, b.x) - band - grid.x0) / grid.h)));
            const int i1 = std::min(grid.nx - 1, int(std::ceil((std::max(a.x, b.x) + band - grid.x0) / grid.h)));
            const int j0 = std::max(0, int(std::floor((std::min(a.y, b.y) - band - grid.y0) / grid.h)));
            const int j1 = std::min(grid.ny - 1, int(std::ceil((std::max(a.y, b.y) + band - grid.y0) / grid.h)));
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    const Vec2 p{grid.x(i), grid.y(j)};
                    const double t = L2 > 0 ? std::clamp(dot(p - a, ab) / L2, 0.0, 1.0) : 0.0;
                    const double dd = norm(p - (a + t * ab));
                    auto& ft = foot[std::size_t(j) * grid.nx + i];
                    if (dd < ft.dist) ft = {int(c), int(k), t, dd};
                }
        }
    }
    return foot;
}

/// Even-odd containment test against all closed curves.
inline bool inside_front(Vec2 p, const FrontCurve& f)
{
    bool in = false;
    for (const auto& pl : f.curves) {
        for (std::size_t k = 0; k < pl.nseg(); ++k) {
            const Vec2 a = pl.seg_a(k), b = pl.seg_b(k);
            if ((a.y > p.y) != (b.y > p.y)) {
                const double xc = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if (xc > p.x) in = !in;
            }
        }
    }
    return in;
}

/// Extended signed distance to the closed curves of f, positive inside.
/// Exact (point-to-segment) within `band` of the curve; elsewhere the sign
/// comes from a scanline fill and the value is the clamp level.
inline SignedDistanceField distance_from_front(const FrontCurve& f, const ScalarField& grid, double rho)
{
    const double band = 2 * rho + 2 * grid.h;
    ScalarField dist = grid.like<double>(INFINITY);
    for (const auto& pl : f.curves) {
        for (std::size_t k = 0; k < pl.nseg(); ++k) {
            const Vec2 a = pl.seg_a(k), b = pl.seg_b(k);
            const int i0 = std::max(0, int(std::floor((std::min(a.x, b.x) - band - grid.x0) / grid.h)));
            const int i1 = std::min(grid.nx - 1, int(std::ceil((std::max(a.x, b.x) + band - grid.x0) / grid.h)));
            const int j0 = std::max(0, int(std::floor((std::min(a.y, b.y) - band - grid.y0) / grid.h)));
            const int j1 = std::min(grid.ny - 1, int(std::ceil((std::max(a.y, b.y) + band - grid.y0) / grid.h)));
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    const double dd = point_segment_distance({grid.x(i), grid.y(j)}, a, b);
                    if (dd < dist(i, j)) dist(i, j) = dd;
                }
        }
    }
    // scanline parity per row
    ScalarField raw = grid.like<double>(0.0);
    std::vector<double> xs;
    for (int j = 0; j < grid.ny; ++j) {
        const double y = grid.y(j);
        xs.clear();
        for (const auto& pl : f.curves)
            for (std::size_t k = 0; k < pl.nseg(); ++k) {
                const Vec2 a = pl.seg_a(k), b = pl.seg_b(k);
                if ((a.y > y) != (b.y > y)) xs.push_back(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
            }
        std::sort(xs.begin(), xs.end());
        std::size_t c = 0;
        for (int i = 0; i < grid.nx; ++i) {
            const double x = grid.x(i);
            while (c < xs.size() && xs[c] < x) ++c;
            const bool in = c % 2 == 1;
            const double a = std::min(dist(i, j), 2 * rho);
            raw(i, j) = in ? a : -a;
        }
    }
    return extend_distance(raw, rho);
}

// ---------------------------------------------------------------------------
// curvature integrals

namespace detail {

/// F(u) = \int_0^u (1+v^2)^{-1-s} dv and its complement F(inf) - F(u), u >= 0.
struct KernelPrimitive {
    double s, Finf, half_beta_c;
    explicit KernelPrimitive(double s_) : s(s_)
    {
        Finf = 0.5 * boost::math::beta(0.5, s + 0.5);
        half_beta_c = Finf;
    }
    double tail(double u) const  // F(inf) - F(u), u >= 0
    {
        if (u == INFINITY) return 0.0;
        return half_beta_c * boost::math::ibeta(s + 0.5, 0.5, 1.0 / (1.0 + u * u));
    }
    double F(double u) const
    {
        const double a = std::abs(u);
        double v;
        if (a < 1e-3) v = a * (1.0 - (1.0 + s) * a * a / 3.0);
        else if (a < 1.0) v = half_beta_c * boost::math::ibeta(0.5, s + 0.5, a * a / (1.0 + a * a));
        else v = Finf - tail(a);
        return u < 0 ? -v : v;
    }
    /// \int_{t1}^{t2} p (p^2 + t^2)^{-1-s} dt
    double line(double p, double t1, double t2) const
    {
        if (p == 0.0) return 0.0;
        const double ap = std::abs(p);
        const double u1 = t1 / ap, u2 = t2 / ap;
        double diff;
        if (u1 >= 0 && u2 >= 0) diff = tail(u1) - tail(u2);
        else if (u1 <= 0 && u2 <= 0) diff = tail(-u2) - tail(-u1);
        else diff = F(u2) - F(u1);
        return (p > 0 ? 1.0 : -1.0) * std::pow(ap, -2 * s) * diff;
    }
};

/// Parameter intervals of the segment a + t (b - a), t in [0,1], outside the
/// ball |z| <= r (z measured from the origin).
inline int outside_ball(Vec2 a, Vec2 b, double r, double out[4])
{
    const Vec2 d = b - a;
    const double A = dot(d, d), B = 2 * dot(a, d), C = dot(a, a) - r * r;
    const double disc = B * B - 4 * A * C;
    if (A == 0.0) return 0;
    if (disc <= 0) {
        out[0] = 0; out[1] = 1;
        return 1;
    }
    const double sq = std::sqrt(disc);
    const double t1 = (-B - sq) / (2 * A), t2 = (-B + sq) / (2 * A);
    int n = 0;
    if (t1 > 0) { out[2 * n] = 0; out[2 * n + 1] = std::min(1.0, t1); ++n; }
    if (t2 < 1) { out[2 * n] = std::max(0.0, t2); out[2 * n + 1] = 1; ++n; }
    return n;
}

} // namespace detail

struct CurvaturePair {
    double kappa_plus = 0.0;
    double kappa_minus = 0.0;
    double kappa = 0.0;
    double tail_error_bound = 0.0;
    Vec2 at{};       // point on the fitted curve where the value applies
    Vec2 normal{};   // unit normal pointing into the positive region
    double curvature = 0.0;  // classical curvature of the fitted curve (positive for convex sets)
};

enum class KappaMode { Exterior, Torus };

struct KappaOptions {
    KappaMode mode = KappaMode::Exterior;
    double near_radius = 0.0;        // 0 -> 5 grid cells
    double h = 0.0;                  // grid spacing of the source field
    const ScalarField* images = nullptr;  // torus: precomputed image contribution field
    bool split = true;               // compute kappa_plus / kappa_minus separately
    bool quiet_underresolved = false;
};

/// Evaluate the curvature integral of the region enclosed by `front` at the
/// point of curve `ci` at parameter t on segment k.
inline CurvaturePair kappa_front(const FrontCurve& front, std::size_t ci, std::size_t k, double t, double s,
                                 const KappaOptions& opt)
{
    const char* where = "kappa_front";
    if (!(opt.h > 0)) throw Error(where, "grid spacing not set");
    const Polyline& pl = front.curves.at(ci);
    const std::size_t nseg = pl.nseg();
    if (nseg < 4) throw Error(where, "curve too short");
    const double r0 = opt.near_radius > 0 ? opt.near_radius : 5 * opt.h;
    static thread_local std::unique_ptr<detail::KernelPrimitive> prim;
    if (!prim || prim->s != s) prim = std::make_unique<detail::KernelPrimitive>(s);
    const auto& P = *prim;

    const Vec2 x0 = pl.seg_a(k) + t * (pl.seg_b(k) - pl.seg_a(k));

    // gather nearby vertices walking both ways along the curve
    const double rfit = 2 * r0;
    std::vector<Vec2> pts;
    auto vertex = [&](long m) -> const Vec2* {
        const long n = long(pl.pts.size());
        if (pl.closed) return &pl.pts[std::size_t(((m % n) + n) % n)];
        if (m < 0 || m >= n) return nullptr;
        return &pl.pts[std::size_t(m)];
    };
    {
        const long n = long(pl.pts.size());
        for (long m = long(k) + 1, c = 0; c < n; ++m, ++c) {
            const Vec2* v = vertex(m);
            if (!v || norm(*v - x0) > rfit) break;
            pts.push_back(*v);
        }
        for (long m = long(k), c = 0; c < n; --m, ++c) {
            const Vec2* v = vertex(m);
            if (!v || norm(*v - x0) > rfit) break;
            pts.push_back(*v);
        }
    }
    if (pts.size() < 7) throw Error(where, "too few curve points near the evaluation point");

    // local polynomial fit y = c1 t + ... + c4 t^4 through the point, in a tangent
    // frame rotated until c1 vanishes.  Pinning the fit at the point matters: a
    // free intercept would evaluate on a smoothed curve and leave short
    // wiggles of the front without a restoring response.
    Vec2 T = pl.seg_b(k) - pl.seg_a(k);
    T = (1.0 / norm(T)) * T;
    const Vec2 org = x0;
    Eigen::Matrix<double, 5, 1> c = Eigen::Matrix<double, 5, 1>::Zero();
    for (int pass = 0; pass < 3; ++pass) {
        const Vec2 N = perp(T);
        Eigen::MatrixXd A(pts.size(), 4);
        Eigen::VectorXd y(pts.size());
        for (std::size_t m = 0; m < pts.size(); ++m) {
            const double tau = dot(pts[m] - org, T) / r0;
            double pw = tau;
            for (int q = 0; q < 4; ++q) { A(Eigen::Index(m), q) = pw; pw *= tau; }
            y(Eigen::Index(m)) = dot(pts[m] - org, N);
        }
        const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(y);
        for (int q = 1; q < 5; ++q) c(q) = sol(q - 1) / std::pow(r0, q);
        const double beta = std::atan(c(1));
        T = {std::cos(beta) * T.x - std::sin(beta) * T.y, std::sin(beta) * T.x + std::cos(beta) * T.y};
    }
    const Vec2 N = perp(T);
    auto g = [&](double tau) { return tau * tau * (c(2) + tau * (c(3) + tau * c(4))); };

    CurvaturePair out;
    out.at = org;
    out.normal = N;
    out.curvature = 2 * c(2);

    // near field: -\int_{|tau|<r0} |tau|^{-1-2s} F(g/|tau|) dtau, substitution tau = r0 u^q
    const double q = 1.0 / (1.0 - 2 * s);
    double near = 0.0, near_plus = 0.0, near_minus = 0.0;
    {
        using GL = boost::math::quadrature::gauss<double, 20>;
        const auto& xs = GL::abscissa();
        const auto& ws = GL::weights();
        auto accumulate = [&](double u, double w) {
            for (int side = -1; side <= 1; side += 2) {
                const double tau = side * r0 * std::pow(u, q);
                const double jac = r0 * q * std::pow(u, q - 1);
                const double at = std::abs(tau);
                const double val = std::pow(at, -1 - 2 * s) * P.F(g(tau) / at) * jac * w;
                near -= val;
                if (g(tau) < 0) near_plus -= val;
                else near_minus += val;
            }
        };
        // nodes on [0,1] mapped from [-1,1]; the abscissa list covers the positive half
        for (std::size_t m = 0; m < xs.size(); ++m) {
            const double wv = 0.5 * ws[m] * (m == 0 && xs[0] == 0.0 ? 1.0 : 1.0);
            accumulate(0.5 * (1 + xs[m]), wv);
            if (xs[m] != 0.0) accumulate(0.5 * (1 - xs[m]), wv);
        }
    }

    // arc of the ball inside the region: exits of the curve through |z| = r0
    auto exit_point = [&](int dir) -> Vec2 {
        const long n = long(pl.pts.size());
        long m = long(k);
        Vec2 prev = x0;
        for (long c2 = 0; c2 <= n; ++c2) {
            const Vec2* v = vertex(dir > 0 ? m + 1 : m);
            if (!v) break;
            const Vec2 cur = *v;
            if (norm(cur - org) >= r0) {
                // bisection on the segment prev -> cur
                double lo = 0, hi = 1;
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (norm(prev + mid * (cur - prev) - org) < r0) lo = mid;
                    else hi = mid;
                }
                return prev + 0.5 * (lo + hi) * (cur - prev);
            }
            prev = cur;
            m += dir;
        }
        throw Error(where, "curve does not leave the near-field ball; refine the grid");
    };
    const Vec2 Aex = exit_point(+1) - org, Bex = exit_point(-1) - org;
    const double thA = std::atan2(dot(Aex, N), dot(Aex, T));
    const double thB = std::atan2(dot(Bex, N), dot(Bex, T));
    double thE = thB - thA;
    while (thE < 0) thE += 2 * M_PI;
    while (thE >= 2 * M_PI) thE -= 2 * M_PI;
    const double arc_unit = std::pow(r0, -2 * s) / (2 * s);

    // far field flux over all segments, clipped outside the ball
    auto seg_flux = [&](Vec2 a, Vec2 b, double t1, double t2) {
        // -(1/2s) \int (z.nu) |z|^{-2-2s} dl over the part t in [t1,t2]
        const Vec2 d = b - a;
        const double len = norm(d);
        if (len == 0.0 || t2 <= t1) return 0.0;
        const Vec2 dh = (1.0 / len) * d;
        const Vec2 nu{dh.y, -dh.x};  // outward: region is on the left
        const double p = dot(a, nu);
        const double ta = dot(a, dh) + t1 * len, tb = dot(a, dh) + t2 * len;
        const double mid = std::hypot(p, 0.5 * (ta + tb));
        double I;
        if (mid > 30.0 * (tb - ta)) {
            const double tt = 0.5 * (ta + tb);
            I = (tb - ta) * p * std::pow(p * p + tt * tt, -1 - s);
        } else if (mid > 6.0 * (tb - ta)) {
            // 4-point Gauss-Legendre is ample for a short, distant piece
            static const double gx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
            static const double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
            I = 0.0;
            for (int m = 0; m < 4; ++m) {
                const double tt = 0.5 * (ta + tb) + 0.5 * (tb - ta) * gx[m];
                I += gw[m] * p * std::pow(p * p + tt * tt, -1 - s);
            }
            I *= 0.5 * (tb - ta);
        } else {
            I = P.line(p, ta, tb);
        }
        return -I / (2 * s);
    };
    double flux_all = 0.0, flux_H = 0.0;
    for (const auto& c2 : front.curves) {
        for (std::size_t m = 0; m < c2.nseg(); ++m) {
            const Vec2 a = c2.seg_a(m) - org, b = c2.seg_b(m) - org;
            double iv[4];
            const int ni = detail::outside_ball(a, b, r0, iv);
            for (int q2 = 0; q2 < ni; ++q2) {
                const double t1 = iv[2 * q2], t2 = iv[2 * q2 + 1];
                flux_all += seg_flux(a, b, t1, t2);
                if (opt.split) {
                    // part with z.N > 0
                    const double ha = dot(a, N), hb = dot(b, N);
                    double lo = t1, hi = t2;
                    if (ha <= 0 && hb <= 0) {
                        hi = lo;
                    } else if (ha < 0 || hb < 0) {
                        const double tc = ha / (ha - hb);
                        if (ha > 0) hi = std::min(hi, tc);
                        else lo = std::max(lo, tc);
                    }
                    if (hi > lo) flux_H += seg_flux(a, b, lo, hi);
                }
            }
        }
    }
    out.kappa = near + flux_all + (thE - M_PI) * arc_unit;
    if (opt.split) {
        // arc inside region and inside the half-plane: [thA, thA + thE] intersected with [0, pi]
        double arcH = 0.0;
        for (int wrap = -1; wrap <= 1; ++wrap) {
            const double lo = std::max(thA + 2 * M_PI * wrap, 0.0);
            const double hi = std::min(thA + thE + 2 * M_PI * wrap, M_PI);
            if (hi > lo) arcH += hi - lo;
        }
        const double EH = flux_H + arcH * arc_unit;        // \int_{(E cap H) \ B} K
        const double Eall = flux_all + thE * arc_unit;     // \int_{E \ B} K
        out.kappa_plus = near_plus + (Eall - EH);
        out.kappa_minus = near_minus + M_PI * arc_unit - EH;
    }

    if (opt.mode == KappaMode::Torus) {
        if (!opt.images) throw Error(where, "torus mode needs the periodic image field");
        const ScalarField& G = *opt.images;
        // bilinear interpolation of the smooth image contribution
        const double fx = (org.x - G.x0) / G.h, fy = (org.y - G.y0) / G.h;
        const int i = std::clamp(int(std::floor(fx)), 0, G.nx - 2), j = std::clamp(int(std::floor(fy)), 0, G.ny - 2);
        const double ax = fx - i, ay = fy - j;
        const double gv = (1 - ax) * (1 - ay) * G(i, j) + ax * (1 - ay) * G(i + 1, j) + (1 - ax) * ay * G(i, j + 1) +
                          ax * ay * G(i + 1, j + 1);
        out.kappa += gv;
        // images sit on both sides of the tangent; attribute them to kappa_plus as a whole
        // and record the ambiguity in the error bound
        out.kappa_plus += gv;
        out.tail_error_bound = std::abs(gv);
    }
    if (opt.split && opt.mode == KappaMode::Exterior) out.kappa = out.kappa_plus - out.kappa_minus;
    if (opt.split && opt.mode == KappaMode::Torus) out.kappa = out.kappa_plus - out.kappa_minus;
    return out;
}

/// Contribution of the periodic copies of the region {field > level} on the
/// torus [x0, x0+L)^2:  G(x) = sum_{m != 0} \int_E |y - x + m L|^{-2-2s} dy,
/// evaluated at every node by one zero-padded FFT correlation.  The region
/// must not touch the box edge.
inline ScalarField periodic_image_field(const ScalarField& d, double level, double s)
{
    const char* where = "periodic_image_field";
    if (d.nx != d.ny) throw Error(where, "square grids only");
    const int n = d.nx, n2 = 2 * n;
    const double L = d.box_x(), h = d.h, p = 2 + 2 * s;
    // smoothed cell coverage of the region
    std::vector<double> f(std::size_t(n2) * n2, 0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (i == 0 || j == 0 || i == n - 1 || j == n - 1)
                if (d(i, j) > level) throw Error(where, "region touches the box edge");
            f[std::size_t(j) * n2 + i] = std::clamp(0.5 + (d(i, j) - level) / h, 0.0, 1.0);
        }
    static std::map<std::tuple<int, double, double>, std::shared_ptr<KernelSpectrum>> cache;
    auto& spec = cache[{n, L, s}];
    if (!spec) {
        const int M = 4;
        const auto far = detail::lattice_far_sums(p, M);
        std::vector<double> q(std::size_t(n2) * n2, 0.0);
        for (int b = -(n - 1); b <= n - 1; ++b)
            for (int a = -(n - 1); a <= n - 1; ++a) {
                const double ux = double(a) / n, uy = double(b) / n;
                double acc = 0.0;
                for (int my = -M; my <= M; ++my)
                    for (int mx = -M; mx <= M; ++mx) {
                        if (mx == 0 && my == 0) continue;
                        const double X = ux + mx, Y = uy + my;
                        acc += std::pow(X * X + Y * Y, -0.5 * p);
                    }
                acc += far.first + 0.25 * (ux * ux + uy * uy) * far.second;
                q[std::size_t((b + n2) % n2) * n2 + std::size_t((a + n2) % n2)] = acc * std::pow(L, -p) * h * h;
            }
        spec = std::make_shared<KernelSpectrum>(q, n2, n2);
    }
    const auto full = spec->apply(f);
    ScalarField G = d.like<double>(0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) G(i, j) = full[std::size_t(j) * n2 + i];
    return G;
}

/// kappa[x, d] at grid node (i, j): the level curve {d = d(x)} is extracted
/// and integrated over.  x must lie in the smooth band |d| < rho.
inline CurvaturePair kappa_at(const SignedDistanceField& d, int i, int j, double s, KappaMode mode = KappaMode::Exterior,
                              double near_radius = 0.0)
{
    const char* where = "kappa_at";
    const ScalarField& F = d.field;
    const double lev = F(i, j);
    if (!(std::abs(lev) < d.rho)) throw Error(where, "point outside the smooth band");
    // gradient check
    if (i > 0 && j > 0 && i + 1 < F.nx && j + 1 < F.ny) {
        const double gx = (F(i + 1, j) - F(i - 1, j)) / (2 * F.h), gy = (F(i, j + 1) - F(i, j - 1)) / (2 * F.h);
        if (std::hypot(gx, gy) < 1e-8) throw Error(where, "vanishing gradient");
    }
    const FrontCurve front = extract_front(F, lev);
    const Vec2 x{F.x(i), F.y(j)};
    // nearest segment
    std::size_t bc = 0, bk = 0;
    double bt = 0, bd = INFINITY;
    for (std::size_t c = 0; c < front.curves.size(); ++c) {
        const auto& pl = front.curves[c];
        for (std::size_t k = 0; k < pl.nseg(); ++k) {
            const Vec2 a = pl.seg_a(k), b = pl.seg_b(k), ab = b - a;
            const double L2 = dot(ab, ab);
            const double t = L2 > 0 ? std::clamp(dot(x - a, ab) / L2, 0.0, 1.0) : 0.0;
            const double dd = norm(x - (a + t * ab));
            if (dd < bd) { bd = dd; bc = c; bk = k; bt = t; }
        }
    }
    if (!(bd < F.h)) throw Error(where, "level curve through the point not found");
    KappaOptions opt;
    opt.mode = mode;
    opt.h = F.h;
    opt.near_radius = near_radius;
    ScalarField G;
    if (mode == KappaMode::Torus) {
        G = periodic_image_field(F, lev, s);
        opt.images = &G;
    }
    return kappa_front(front, bc, bk, bt, s, opt);
}

struct OmegaEstimate {
    double omega = 0.0;            // extrapolated
    std::vector<double> radii;
    std::vector<int> resolutions;
    std::vector<std::vector<double>> raw;   // raw[r][res] = -kappa r^{2s}
    std::vector<double> per_radius;         // extrapolated per radius
    double spread = 0.0;                    // max relative deviation across radii
};

/// omega in kappa = -omega r^{-2s} for discs in the whole plane, from a
/// resolution ladder (Richardson with observed order) at several radii.
inline OmegaEstimate omega_constant(const FracOrder& order, const std::vector<double>& radii,
                                    const std::vector<int>& resolutions, double box = 1.0)
{
    const char* where = "omega_constant";
    if (order.n != 2) throw Error(where, "the geometric flow is two-dimensional");
    if (resolutions.size() < 2) throw Error(where, "need at least two resolutions");
    OmegaEstimate est;
    est.radii = radii;
    est.resolutions = resolutions;
    for (double r : radii) {
        std::vector<double> vals;
        for (int n : resolutions) {
            const double h = box / n;
            const auto d = signed_distance_circle(n, box, {0.5 * box + 0.3 * h, 0.5 * box + 0.1 * h}, r, 0.0, 6 * h);
            // node nearest the circle on the positive x axis
            int bi = 0, bj = n / 2;
            double best = INFINITY;
            for (int i = 0; i < n; ++i) {
                const double v = std::abs(d.field(i, bj));
                if (d.field.x(i) > 0.5 * box && v < best) { best = v; bi = i; }
            }
            const auto k = kappa_at(d, bi, bj, order.s);
            // the level through the node is a circle of radius r - d(node)
            const double reff = r - d.field(bi, bj);
            vals.push_back(-k.kappa * std::pow(reff, 2 * order.s));
        }
        double w = vals.back();
        if (vals.size() >= 3) {
            const double d1 = vals[vals.size() - 2] - vals[vals.size() - 3];
            const double d2 = vals.back() - vals[vals.size() - 2];
            if (d1 != 0.0 && d2 / d1 > 0 && d2 / d1 < 1) w = vals.back() + d2 * (d2 / d1) / (1 - d2 / d1);
        }
        if (!std::isfinite(w) || !(w > 0)) throw Error(where, "non-convergent ladder");
        est.raw.push_back(vals);
        est.per_radius.push_back(w);
    }
    double acc = 0.0;
    for (double w : est.per_radius) acc += w;
    est.omega = acc / double(est.per_radius.size());
    for (double w : est.per_radius) est.spread = std::max(est.spread, std::abs(w / est.omega - 1));
    return est;
}

} // namespace fracflow
