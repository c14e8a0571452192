#pragma once

// Thin RAII layer over FFTW's real-to-complex transforms.  Plans are built with
// FFTW_ESTIMATE so that the arithmetic (and therefore every output bit) is the
// same from run to run.

#include <complex>
#include <map>
#include <memory>
#include <vector>

#include <fftw3.h>

#include "core.hpp"

namespace fracflow {

using cplx = std::complex<double>;

class Fft2 {
public:
    Fft2(int nx, int ny) : nx_(nx), ny_(ny), nxc_(nx / 2 + 1)
    {
        in_ = static_cast<double*>(fftw_malloc(sizeof(double) * std::size_t(nx) * ny));
        out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * std::size_t(nxc_) * ny));
        fwd_ = fftw_plan_dft_r2c_2d(ny, nx, in_, out_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r_2d(ny, nx, out_, in_, FFTW_ESTIMATE);
    }
    ~Fft2()
    {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(in_);
        fftw_free(out_);
    }
    Fft2(const Fft2&) = delete;
    Fft2& operator=(const Fft2&) = delete;

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nxc() const { return nxc_; }
    std::size_t spectral_size() const { return std::size_t(nxc_) * ny_; }

    std::vector<cplx> forward(const std::vector<double>& f)
    {
        std::copy(f.begin(), f.end(), in_);
        fftw_execute(fwd_);
        std::vector<cplx> r(spectral_size());
        for (std::size_t k = 0; k < r.size(); ++k) r[k] = cplx(out_[k][0], out_[k][1]);
        return r;
    }

    /// Inverse transform including the 1/(nx*ny) normalisation.
    std::vector<double> inverse(const std::vector<cplx>& F)
    {
        for (std::size_t k = 0; k < F.size(); ++k) {
            out_[k][0] = F[k].real();
            out_[k][1] = F[k].imag();
        }
        fftw_execute(bwd_);
        const double scale = 1.0 / (double(nx_) * ny_);
        std::vector<double> r(std::size_t(nx_) * ny_);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] = in_[k] * scale;
        return r;
    }

    /// Angular wavenumbers of spectral slot (i, j) for a box of size Lx x Ly.
    double kx(int i, double Lx) const { return 2.0 * M_PI * i / Lx; }
    double ky(int j, double Ly) const { return 2.0 * M_PI * (j <= ny_ / 2 ? j : j - ny_) / Ly; }

    /// Shared instance per shape.  Not thread safe; the library is single
    /// threaded by design.
    static Fft2& get(int nx, int ny)
    {
        static std::map<std::pair<int, int>, std::unique_ptr<Fft2>> cache;
        auto& p = cache[{nx, ny}];
        if (!p) p = std::make_unique<Fft2>(nx, ny);
        return *p;
    }

private:
    int nx_, ny_, nxc_;
    double* in_;
    fftw_complex* out_;
    fftw_plan fwd_, bwd_;
};

class Fft1 {
public:
    explicit Fft1(int n) : n_(n)
    {
        in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
        fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
    }
    ~Fft1()
    {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(in_);
        fftw_free(out_);
    }
    Fft1(const Fft1&) = delete;
    Fft1& operator=(const Fft1&) = delete;

    /// Multiply the periodic samples f (period L) by symbol(k) in Fourier space.
    template <class Symbol>
    std::vector<double> apply(const std::vector<double>& f, double L, Symbol&& symbol)
    {
        std::copy(f.begin(), f.end(), in_);
        fftw_execute(fwd_);
        for (int k = 0; k <= n_ / 2; ++k) {
            const double m = symbol(2.0 * M_PI * k / L) / n_;
            out_[k][0] *= m;
            out_[k][1] *= m;
        }
        fftw_execute(bwd_);
        return std::vector<double>(in_, in_ + n_);
    }

private:
    int n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan fwd_, bwd_;
};

/// Circular correlation out(x) = sum_z w(z) f(x+z) on an nx*ny torus, where
/// w is given on the same torus (w(0,0) at index 0, negative offsets wrapped).
struct KernelSpectrum {
    int nx = 0, ny = 0;
    std::vector<cplx> hat;

    KernelSpectrum() = default;
    KernelSpectrum(const std::vector<double>& w, int nx_, int ny_) : nx(nx_), ny(ny_)
    {
        // correlation = convolution with the reflected kernel, whose transform
        // is the complex conjugate
        hat = Fft2::get(nx, ny).forward(w);
        for (auto& c : hat) c = std::conj(c);
    }

    std::vector<double> apply(const std::vector<double>& f) const
    {
        auto& fft = Fft2::get(nx, ny);
        auto F = fft.forward(f);
        for (std::size_t k = 0; k < F.size(); ++k) F[k] *= hat[k];
        return fft.inverse(F);
    }
};

} // namespace fracflow
