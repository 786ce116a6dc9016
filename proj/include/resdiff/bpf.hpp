#ifndef RESDIFF_BPF_HPP
#define RESDIFF_BPF_HPP

#include <array>

#include "resdiff/types.hpp"

namespace resdiff::bpf {

struct Biquad {
    double b0 = 0, b1 = 0, b2 = 0; // numerator
    double a1 = 0, a2 = 0;         // denominator (a0 = 1)
};

// 4th-order Butterworth band-pass (order-2 low-pass prototype transformed to
// band-pass), as a cascade of two biquads with unit gain at the band center.
std::array<Biquad, 2> design_bandpass(double fs_hz, double low_hz, double high_hz);

// Zero-phase band-pass: forward-backward run of the biquad cascade with
// odd-extension padding and steady-state initial conditions.
Vec filtfilt(const Vec& x, double fs_hz, double low_hz, double high_hz);

// Classical baseline: zero-phase band-pass then min-max renormalization.
Vec bpf_baseline(const Vec& y, double fs_hz, double low_hz = 0.1, double high_hz = 0.7);

} // namespace resdiff::bpf

#endif
