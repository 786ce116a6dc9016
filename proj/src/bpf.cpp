#include "resdiff/bpf.hpp"

#include <cmath>
#include <complex>

#include "resdiff/signal.hpp"

namespace resdiff::bpf {

namespace {

using cd = std::complex<double>;

// One biquad pass with explicit initial state (direct form II transposed).
void run_biquad(const Biquad& q, Vec& x, double s1_0, double s2_0) {
    double s1 = s1_0, s2 = s2_0;
    for (Eigen::Index n = 0; n < x.size(); ++n) {
        double in = x[n];
        double out = q.b0 * in + s1;
        s1 = q.b1 * in - q.a1 * out + s2;
        s2 = q.b2 * in - q.a2 * out;
        x[n] = out;
    }
}

// Steady-state initial state for a constant input of 1 (scaled by the first
// sample when used), so forward/backward passes start transient-free.
void steady_state(const Biquad& q, double& s1, double& s2) {
    const double h1 = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    s2 = q.b2 - q.a2 * h1;
    s1 = q.b1 + q.b2 - (q.a1 + q.a2) * h1;
}

void cascade_forward(const std::array<Biquad, 2>& sos, Vec& x) {
    for (const auto& q : sos) {
        double s1, s2;
        steady_state(q, s1, s2);
        run_biquad(q, x, s1 * x[0], s2 * x[0]);
    }
}

} // namespace

std::array<Biquad, 2> design_bandpass(double fs_hz, double low_hz, double high_hz) {
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs_hz / 2.0))
        throw ConfigError("bandpass: require 0 < low < high < fs/2");

    // prewarped analog edges for the bilinear transform (fs normalized to 1)
    const double w1 = std::tan(kPi * low_hz / fs_hz);
    const double w2 = std::tan(kPi * high_hz / fs_hz);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    // order-2 Butterworth prototype pole in the upper half plane
    const cd proto = std::polar(1.0, 3.0 * kPi / 4.0);

    // low-pass -> band-pass: s^2 - p*bw*s + w0^2 = 0
    const cd disc = std::sqrt(proto * proto * bw * bw - 4.0 * w0sq);
    const cd sa = 0.5 * (proto * bw + disc);
    const cd sb = 0.5 * (proto * bw - disc);

    auto bilinear = [](cd s) { return (1.0 + s) / (1.0 - s); };
    const cd za = bilinear(sa);
    const cd zb = bilinear(sb);

    std::array<Biquad, 2> sos;
    auto fill = [](Biquad& q, cd pole) {
        q.b0 = 1.0;
        q.b1 = 0.0;
        q.b2 = -1.0; // zeros at z = +1 and z = -1
        q.a1 = -2.0 * pole.real();
        q.a2 = std::norm(pole);
    };
    fill(sos[0], za);
    fill(sos[1], zb);

    // unit gain at the (digital) band center
    const double wc = 2.0 * std::atan(std::sqrt(w0sq));
    const cd z = std::polar(1.0, wc);
    const cd zinv = 1.0 / z;
    cd h = 1.0;
    for (const auto& q : sos)
        h *= (q.b0 + q.b1 * zinv + q.b2 * zinv * zinv) /
             (1.0 + q.a1 * zinv + q.a2 * zinv * zinv);
    const double g = 1.0 / std::abs(h);
    sos[0].b0 *= g;
    sos[0].b1 *= g;
    sos[0].b2 *= g;
    return sos;
}

Vec filtfilt(const Vec& x, double fs_hz, double low_hz, double high_hz) {
    if (x.size() < 4) throw DataError("filtfilt: input too short");
    const auto sos = design_bandpass(fs_hz, low_hz, high_hz);

    const Eigen::Index n = x.size();
    const Eigen::Index pad = std::min<Eigen::Index>(
        n - 1, static_cast<Eigen::Index>(std::llround(1.5 * fs_hz / low_hz)));

    // odd extension at both ends
    Vec ext(n + 2 * pad);
    for (Eigen::Index i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
    ext.segment(pad, n) = x;
    for (Eigen::Index i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    cascade_forward(sos, ext);
    ext.reverseInPlace();
    cascade_forward(sos, ext);
    ext.reverseInPlace();
    return ext.segment(pad, n);
}

Vec bpf_baseline(const Vec& y, double fs_hz, double low_hz, double high_hz) {
    return signal::minmax_normalize(filtfilt(y, fs_hz, low_hz, high_hz));
}

} // namespace resdiff::bpf
