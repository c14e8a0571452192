#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "core.hpp"

namespace fracflow {

/// How a 1D profile continues outside its sampled window [xi.front(), xi.back()].
///   Flat   - constant continuation with the end value
///   Fixed  - linear ramp over one end spacing to `limit`, then constant
///   Power  - limit + A*|xi|^(-p), with A fixed by continuity at the end node
struct Tail {
    enum class Kind { Flat, Fixed, Power };
    Kind kind = Kind::Flat;
    double limit = 0.0;
    double p = 0.0;

    static Tail flat() { return {Kind::Flat, 0.0, 0.0}; }
    static Tail fixed(double c) { return {Kind::Fixed, c, 0.0}; }
    static Tail power(double c, double p) { return {Kind::Power, c, p}; }
};

inline const char* tail_name(Tail::Kind k)
{
    switch (k) {
    case Tail::Kind::Flat: return "flat";
    case Tail::Kind::Fixed: return "fixed";
    case Tail::Kind::Power: return "power";
    }
    return "?";
}

/// Gauss-Legendre nodes/weights on [0,1].
template <int N>
struct GaussLegendre01;

template <>
struct GaussLegendre01<3> {
    static constexpr std::array<double, 3> x{0.11270166537925831, 0.5, 0.88729833462074169};
    static constexpr std::array<double, 3> w{0.27777777777777778, 0.44444444444444444, 0.27777777777777778};
};

template <>
struct GaussLegendre01<5> {
    static constexpr std::array<double, 5> x{0.046910077030668004, 0.23076534494715845, 0.5,
                                             0.76923465505284155, 0.95308992296933200};
    static constexpr std::array<double, 5> w{0.11846344252809454, 0.23931433524968324, 0.28444444444444444,
                                             0.23931433524968324, 0.11846344252809454};
};

template <>
struct GaussLegendre01<8> {
    static constexpr std::array<double, 8> x{0.019855071751231856, 0.10166676129318664, 0.23723379504183550,
                                             0.40828267875217510,  0.59171732124782490, 0.76276620495816450,
                                             0.89833323870681336,  0.98014492824876814};
    static constexpr std::array<double, 8> w{0.050614268145188130, 0.11119051722668724, 0.15685332293894364,
                                             0.18134189168918100,  0.18134189168918100, 0.15685332293894364,
                                             0.11119051722668724,  0.050614268145188130};
};

/// Samples of a function of one variable on a strictly increasing grid.
struct Profile1D {
    std::vector<double> xi;
    std::vector<double> values;
    Tail left, right;
    // Fritsch-Carlson limiter on the interpolation slopes.  The operators below
    // always use the unlimited stencil; for resolved monotone data the two agree.
    bool monotone = false;

    std::size_t size() const { return xi.size(); }
    double L_left() const { return xi.front(); }
    double L_right() const { return xi.back(); }

    void validate(const char* where) const
    {
        if (xi.size() < 4 || xi.size() != values.size())
            throw Error(where, "profile needs >= 4 samples and matching arrays");
        for (std::size_t k = 1; k < xi.size(); ++k)
            if (!(xi[k] > xi[k - 1])) throw Error(where, "grid not strictly increasing");
        check_finite(values, where);
        if (left.kind == Tail::Kind::Power && !(xi.front() < 0))
            throw Error(where, "power tail on the left needs xi.front() < 0");
        if (right.kind == Tail::Kind::Power && !(xi.back() > 0))
            throw Error(where, "power tail on the right needs xi.back() > 0");
    }

    /// Amplitude A of a power tail (value = limit + A |xi|^-p).
    double amp_left() const { return (values.front() - left.limit) * std::pow(-xi.front(), left.p); }
    double amp_right() const { return (values.back() - right.limit) * std::pow(xi.back(), right.p); }

    double tail_value(double x) const
    {
        if (x < xi.front()) {
            const double u0 = values.front();
            switch (left.kind) {
            case Tail::Kind::Flat: return u0;
            case Tail::Kind::Fixed: {
                const double he = xi[1] - xi[0];
                const double t = (xi.front() - x) / he;
                return t >= 1 ? left.limit : u0 + (left.limit - u0) * t;
            }
            case Tail::Kind::Power: return left.limit + amp_left() * std::pow(-x, -left.p);
            }
        }
        const double un = values.back();
        switch (right.kind) {
        case Tail::Kind::Flat: return un;
        case Tail::Kind::Fixed: {
            const std::size_t n = xi.size();
            const double he = xi[n - 1] - xi[n - 2];
            const double t = (x - xi.back()) / he;
            return t >= 1 ? right.limit : un + (right.limit - un) * t;
        }
        case Tail::Kind::Power: return right.limit + amp_right() * std::pow(x, -right.p);
        }
        return un;
    }

    double tail_deriv(double x) const
    {
        if (x < xi.front()) {
            switch (left.kind) {
            case Tail::Kind::Flat: return 0.0;
            case Tail::Kind::Fixed: {
                const double he = xi[1] - xi[0];
                return (xi.front() - x) >= he ? 0.0 : -(left.limit - values.front()) / he;
            }
            case Tail::Kind::Power: return left.p * amp_left() * std::pow(-x, -left.p - 1);
            }
        }
        switch (right.kind) {
        case Tail::Kind::Flat: return 0.0;
        case Tail::Kind::Fixed: {
            const std::size_t n = xi.size();
            const double he = xi[n - 1] - xi[n - 2];
            return (x - xi.back()) >= he ? 0.0 : (right.limit - values.back()) / he;
        }
        case Tail::Kind::Power: return -right.p * amp_right() * std::pow(x, -right.p - 1);
        }
        return 0.0;
    }

    /// Position of node k, extended beyond the window by repeating the end
    /// spacings (ghost nodes for the derivative stencil).
    double node_x(long k) const
    {
        const long n = long(xi.size());
        if (k < 0) return xi[0] - (xi[1] - xi[0]) * double(-k);
        if (k >= n) return xi[std::size_t(n - 1)] + (xi[std::size_t(n - 1)] - xi[std::size_t(n - 2)]) * double(k - n + 1);
        return xi[std::size_t(k)];
    }

    /// Tail value at x written as a + b*u_end, where u_end is the end sample on
    /// that side.  Everything downstream is affine in the samples.
    std::pair<double, double> tail_affine(double x) const
    {
        const bool lft = x < xi.front();
        const Tail& t = lft ? left : right;
        const std::size_t n = xi.size();
        const double dist = lft ? xi.front() - x : x - xi.back();
        switch (t.kind) {
        case Tail::Kind::Flat: return {0.0, 1.0};
        case Tail::Kind::Fixed: {
            const double he = lft ? xi[1] - xi[0] : xi[n - 1] - xi[n - 2];
            const double r = dist / he;
            if (r >= 1) return {t.limit, 0.0};
            return {t.limit * r, 1.0 - r};
        }
        case Tail::Kind::Power: {
            const double Le = lft ? -xi.front() : xi.back();
            const double r = std::pow(Le / std::abs(x), t.p);
            return {t.limit * (1.0 - r), r};
        }
        }
        return {0.0, 1.0};
    }

    /// Slope at node i as an affine form: sum_j w[j]*values[idx[j]] + c.
    struct SlopeStencil {
        std::array<std::size_t, 5> idx;
        std::array<double, 5> w;
        double c = 0.0;
    };

    SlopeStencil slope_stencil(std::size_t i) const
    {
        const long n = long(xi.size());
        std::array<double, 5> X;
        for (int m = 0; m < 5; ++m) X[m] = node_x(long(i) - 2 + m);
        const auto d = lagrange5_deriv_weights(X);
        SlopeStencil st;
        for (int m = 0; m < 5; ++m) {
            const long k = long(i) - 2 + m;
            if (k >= 0 && k < n) {
                st.idx[m] = std::size_t(k);
                st.w[m] = d[m];
            } else {
                const auto [a, b] = tail_affine(X[m]);
                st.idx[m] = k < 0 ? 0 : std::size_t(n - 1);
                st.w[m] = d[m] * b;
                st.c += d[m] * a;
            }
        }
        return st;
    }

    /// Weights of the derivative at X[2] of the quartic through (X[m], U[m]).
    static std::array<double, 5> lagrange5_deriv_weights(const std::array<double, 5>& X)
    {
        std::array<double, 5> w{};
        double s2 = 0.0;
        for (int j = 0; j < 5; ++j) {
            if (j == 2) continue;
            s2 += 1.0 / (X[2] - X[j]);
            double num = 1.0, den = 1.0;
            for (int m = 0; m < 5; ++m) {
                if (m == j) continue;
                den *= X[j] - X[m];
                if (m != 2) num *= X[2] - X[m];
            }
            w[j] = num / den;
        }
        w[2] = s2;
        return w;
    }

    /// Must be called after editing xi/values/tails in place.
    void invalidate() const { slopes_.clear(); }

    /// Node slopes for the cubic Hermite interpolant (cached).
    const std::vector<double>& slopes() const
    {
        if (slopes_.size() == xi.size()) return slopes_;
        const std::size_t n = xi.size();
        slopes_.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto st = slope_stencil(i);
            double d = st.c;
            for (int m = 0; m < 5; ++m) d += st.w[m] * values[st.idx[m]];
            slopes_[i] = d;
        }
        if (monotone) {
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const double delta = (values[k + 1] - values[k]) / (xi[k + 1] - xi[k]);
                if (delta == 0.0) { slopes_[k] = slopes_[k + 1] = 0.0; continue; }
                double a = slopes_[k] / delta, b = slopes_[k + 1] / delta;
                if (a < 0) { slopes_[k] = 0; a = 0; }
                if (b < 0) { slopes_[k + 1] = 0; b = 0; }
                const double r = a * a + b * b;
                if (r > 9.0) {
                    const double t = 3.0 / std::sqrt(r);
                    slopes_[k] = t * a * delta;
                    slopes_[k + 1] = t * b * delta;
                }
            }
        }
        return slopes_;
    }

    std::size_t interval(double x) const
    {
        auto it = std::upper_bound(xi.begin(), xi.end(), x);
        std::size_t k = std::size_t(it - xi.begin());
        if (k == 0) return 0;
        if (k >= xi.size()) return xi.size() - 2;
        return k - 1;
    }

    double operator()(double x) const
    {
        if (x < xi.front() || x > xi.back()) return tail_value(x);
        const auto& m = slopes();
        const std::size_t k = interval(x);
        const double hk = xi[k + 1] - xi[k];
        const double t = (x - xi[k]) / hk;
        const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
        const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
        return h00 * values[k] + h10 * hk * m[k] + h01 * values[k + 1] + h11 * hk * m[k + 1];
    }

    double deriv(double x) const
    {
        if (x < xi.front() || x > xi.back()) return tail_deriv(x);
        const auto& m = slopes();
        const std::size_t k = interval(x);
        const double hk = xi[k + 1] - xi[k];
        const double t = (x - xi[k]) / hk;
        const double d00 = 6 * t * (t - 1), d10 = (1 - t) * (1 - 3 * t);
        const double d01 = -6 * t * (t - 1), d11 = t * (3 * t - 2);
        return (d00 * values[k] + d01 * values[k + 1]) / hk + d10 * m[k] + d11 * m[k + 1];
    }

    /// Trapezoid weights on the sampled window.
    std::vector<double> trapezoid_weights() const
    {
        const std::size_t n = xi.size();
        std::vector<double> w(n, 0.0);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double hk = 0.5 * (xi[k + 1] - xi[k]);
            w[k] += hk;
            w[k + 1] += hk;
        }
        return w;
    }

    /// Gauss-Legendre (5 points per interval) integral of f(x, u(x), u'(x))
    /// over the sampled window.
    template <class F>
    double integrate_window(F&& f) const
    {
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < xi.size(); ++k) {
            const double a = xi[k], hk = xi[k + 1] - xi[k];
            double part = 0.0;
            for (int q = 0; q < 5; ++q) {
                const double x = a + hk * GaussLegendre01<5>::x[q];
                // evaluate inside the interval directly (avoid the search)
                part += GaussLegendre01<5>::w[q] * f(x, eval_in(k, x), deriv_in(k, x));
            }
            acc += part * hk;
        }
        return acc;
    }

    double eval_in(std::size_t k, double x) const
    {
        const auto& m = slopes();
        const double hk = xi[k + 1] - xi[k];
        const double t = (x - xi[k]) / hk;
        const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
        const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
        return h00 * values[k] + h10 * hk * m[k] + h01 * values[k + 1] + h11 * hk * m[k + 1];
    }

    double deriv_in(std::size_t k, double x) const
    {
        const auto& m = slopes();
        const double hk = xi[k + 1] - xi[k];
        const double t = (x - xi[k]) / hk;
        const double d00 = 6 * t * (t - 1), d10 = (1 - t) * (1 - 3 * t);
        const double d01 = -6 * t * (t - 1), d11 = t * (3 * t - 2);
        return (d00 * values[k] + d01 * values[k + 1]) / hk + d10 * m[k] + d11 * m[k + 1];
    }

private:
    mutable std::vector<double> slopes_;
};

/// Grid recipes for Profile1D.
struct ProfileGrid {
    enum class Kind { Uniform, Stretched };
    Kind kind = Kind::Stretched;
    double L = 50.0;        // half-width of the sampled window
    int N = 4097;           // uniform: number of nodes (made odd so that 0 is a node)
    double core_L = 40.0;   // stretched: half-width of the uniform core
    double core_h = 0.1;    // stretched: core spacing
    double growth = 1.02;   // stretched: ratio of consecutive spacings outside the core

    std::vector<double> build() const
    {
        std::vector<double> x;
        if (kind == Kind::Uniform) {
            int n = N % 2 ? N : N + 1;
            if (n < 5 || !(L > 0)) throw Error("ProfileGrid", "bad uniform grid");
            const double h = 2 * L / (n - 1);
            for (int k = 0; k < n; ++k) x.push_back(-L + h * k);
            x[std::size_t(n / 2)] = 0.0;
            return x;
        }
        if (!(core_h > 0 && core_L > core_h && L > core_L && growth > 1.0))
            throw Error("ProfileGrid", "bad stretched grid parameters");
        std::vector<double> half{0.0};
        const int nc = int(std::ceil(core_L / core_h));
        const double hc = core_L / nc;
        for (int k = 1; k <= nc; ++k) half.push_back(hc * k);
        double h = hc;
        while (half.back() < L) {
            h *= growth;
            half.push_back(half.back() + h);
        }
        half.back() = L;
        if (half[half.size() - 1] - half[half.size() - 2] < 0.5 * h) half.erase(half.end() - 2);
        for (std::size_t k = half.size() - 1; k > 0; --k) x.push_back(-half[k]);
        for (double v : half) x.push_back(v);
        return x;
    }
};

} // namespace fracflow
