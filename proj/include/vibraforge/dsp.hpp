#pragma once

// Small signal-processing kit: FFT (radix-2, Bluestein for other lengths),
// analytic signal, and a zero-phase Butterworth low-pass.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace vibraforge::dsp {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

namespace detail {

inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1 : -1);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Chirp-z evaluation of an arbitrary-length DFT through power-of-two FFTs.
inline void fft_bluestein(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    const std::size_t m = next_pow2(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cplx> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for long inputs.
        const auto k2 = static_cast<double>((k * k) % (2 * n));
        const double ang = sign * std::numbers::pi * k2 / static_cast<double>(n);
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }
    std::vector<cplx> x(m), y(m);
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);
    fft_pow2(x, false);
    fft_pow2(y, false);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_pow2(x, true);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] / static_cast<double>(m) * chirp[k];
}

}  // namespace detail

/// In-place unnormalized DFT (inverse is scaled by 1/n).
inline void fft(std::vector<cplx>& a, bool inverse = false) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size())) {
        detail::fft_pow2(a, inverse);
    } else {
        detail::fft_bluestein(a, inverse);
    }
    if (inverse) {
        for (auto& v : a) v /= static_cast<double>(a.size());
    }
}

/// Analytic signal x + i·H{x} of exactly the given length (circular).
inline std::vector<cplx> analytic_signal(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<cplx> spec(x.begin(), x.end());
    if (n == 0) return spec;
    fft(spec);
    // Keep DC (and Nyquist for even n), double positive, zero negative.
    for (std::size_t k = 1; k < n; ++k) {
        if (2 * k < n) {
            spec[k] *= 2.0;
        } else if (2 * k > n) {
            spec[k] = 0.0;
        }
    }
    fft(spec, true);
    return spec;
}

/// Second-order section, transposed direct form II.
struct Biquad {
    double b0, b1, b2, a1, a2;

    void run(std::vector<double>& x) const {
        double s1 = 0, s2 = 0;
        for (double& v : x) {
            const double in = v;
            const double out = b0 * in + s1;
            s1 = b1 * in - a1 * out + s2;
            s2 = b2 * in - a2 * out;
            v = out;
        }
    }
};

/// Bilinear-transform low-pass section with quality factor q.
inline Biquad lowpass_section(double cutoff_hz, double sample_rate_hz, double q) {
    const double w0 = 2 * std::numbers::pi * cutoff_hz / sample_rate_hz;
    const double alpha = std::sin(w0) / (2 * q);
    const double c = std::cos(w0);
    const double a0 = 1 + alpha;
    return {(1 - c) / 2 / a0, (1 - c) / a0, (1 - c) / 2 / a0, -2 * c / a0, (1 - alpha) / a0};
}

/// 4th-order Butterworth low-pass as two cascaded sections.
inline std::array<Biquad, 2> butterworth4_lowpass(double cutoff_hz, double sample_rate_hz) {
    return {lowpass_section(cutoff_hz, sample_rate_hz, 1.0 / (2 * std::cos(std::numbers::pi / 8))),
            lowpass_section(cutoff_hz, sample_rate_hz, 1.0 / (2 * std::cos(3 * std::numbers::pi / 8)))};
}

/// Forward-backward (zero-phase) filtering with `pad` zeros on both sides.
inline std::vector<double> filtfilt(const std::array<Biquad, 2>& sections, std::span<const double> x,
                                    std::size_t pad) {
    std::vector<double> buf(x.size() + 2 * pad, 0.0);
    std::copy(x.begin(), x.end(), buf.begin() + static_cast<std::ptrdiff_t>(pad));
    for (const auto& s : sections) s.run(buf);
    std::reverse(buf.begin(), buf.end());
    for (const auto& s : sections) s.run(buf);
    std::reverse(buf.begin(), buf.end());
    return buf;
}

}  // namespace vibraforge::dsp
