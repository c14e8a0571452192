#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fracflow {

/// Every failure in the library is reported through this type.  The message
/// always starts with the module name so that callers further up (the harness)
/// can forward it unchanged.
class Error : public std::runtime_error {
public:
    Error(const std::string& where, const std::string& what)
        : std::runtime_error(where + ": " + what), where_(where) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

template <class... Args>
std::string strcat(Args&&... args)
{
    std::ostringstream os;
    os.precision(17);
    (os << ... << args);
    return os.str();
}

/// Order of the operator and the ambient dimension.  s is restricted to the
/// singular regime 0 < s < 1/2.
struct FracOrder {
    double s = 0.25;
    int n = 2;

    FracOrder() = default;
    FracOrder(double s_, int n_) : s(s_), n(n_) { validate(); }

    void validate() const
    {
        if (!(s > 0.0 && s < 0.5))
            throw Error("FracOrder", strcat("s must lie in (0, 0.5), got ", s));
        if (n < 1)
            throw Error("FracOrder", strcat("dimension must be >= 1, got ", n));
    }
    FracOrder with_n(int m) const { return FracOrder(s, m); }
};

/// Doubly periodic 2D grid of samples.  Index (i, j) is x-fast: data[j*nx + i]
/// holds the value at (x0 + i*h, y0 + j*h).  Square cells only.
template <class T>
struct Field {
    int nx = 0, ny = 0;
    double h = 0.0;
    double x0 = 0.0, y0 = 0.0;
    std::vector<T> data;

    Field() = default;
    Field(int nx_, int ny_, double h_, double x0_ = 0.0, double y0_ = 0.0, T fill = T{})
        : nx(nx_), ny(ny_), h(h_), x0(x0_), y0(y0_), data(std::size_t(nx_) * ny_, fill)
    {
        if (nx <= 0 || ny <= 0 || !(h > 0))
            throw Error("Field", "invalid grid shape");
    }

    static Field square(int n, double box, T fill = T{}) { return Field(n, n, box / n, 0.0, 0.0, fill); }

    std::size_t size() const { return data.size(); }
    double box_x() const { return nx * h; }
    double box_y() const { return ny * h; }
    double x(int i) const { return x0 + i * h; }
    double y(int j) const { return y0 + j * h; }

    T& operator()(int i, int j) { return data[std::size_t(j) * nx + i]; }
    const T& operator()(int i, int j) const { return data[std::size_t(j) * nx + i]; }

    /// Periodic access.
    const T& wrap(int i, int j) const
    {
        i %= nx; if (i < 0) i += nx;
        j %= ny; if (j < 0) j += ny;
        return (*this)(i, j);
    }

    bool same_grid(const Field& o) const
    {
        return nx == o.nx && ny == o.ny && h == o.h && x0 == o.x0 && y0 == o.y0;
    }

    template <class U>
    Field<U> like(U fill = U{}) const { return Field<U>(nx, ny, h, x0, y0, fill); }
};

using ScalarField = Field<double>;

inline void require_same_grid(const ScalarField& a, const ScalarField& b, const char* where)
{
    if (!a.same_grid(b))
        throw Error(where, "grid mismatch between inputs");
}

inline double sup_norm(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline void check_finite(const std::vector<double>& v, const char* where)
{
    for (double x : v)
        if (!std::isfinite(x)) throw Error(where, "non-finite sample");
}

/// C^2 quintic blend: 0 for t<=0, 1 for t>=1.
inline double smoothstep5(double t)
{
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

inline double smoothstep5_deriv(double t)
{
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double u = t * (1.0 - t);
    return 30.0 * u * u;
}

} // namespace fracflow
