#include "resdiff/metrics.hpp"

#include <cmath>
#include <complex>
#include <unsupported/Eigen/FFT>

namespace resdiff::metrics {

double cosine_similarity(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DataError("cosine_similarity: length mismatch");
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine_similarity: zero-norm input");
    return a.dot(b) / (na * nb);
}

double mse(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DataError("mse: length mismatch");
    if (a.size() == 0) throw DataError("mse: empty input");
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double estimate_rate(const Vec& waveform, double fs_hz, double low_hz, double high_hz) {
    const int n = static_cast<int>(waveform.size());
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs_hz / 2.0))
        throw ConfigError("estimate_rate: invalid band");
    if (n < static_cast<int>(2.0 * fs_hz / low_hz))
        throw DataError("estimate_rate: waveform shorter than two cycles of the band floor");

    int nfft = 1;
    while (nfft < 16 * n) nfft <<= 1;

    std::vector<std::complex<double>> in(nfft, {0.0, 0.0});
    const double mean = waveform.mean();
    for (int i = 0; i < n; ++i) in[i] = waveform[i] - mean;
    std::vector<std::complex<double>> out(nfft);
    Eigen::FFT<double> fft;
    fft.fwd(out, in);

    const double df = fs_hz / nfft;
    const int k_lo = std::max(1, static_cast<int>(std::ceil(low_hz / df)));
    const int k_hi = std::min(nfft / 2 - 1, static_cast<int>(std::floor(high_hz / df)));
    if (k_lo > k_hi) throw ConfigError("estimate_rate: band narrower than one bin");

    int k_peak = k_lo;
    double p_peak = 0.0;
    for (int k = k_lo; k <= k_hi; ++k) {
        double p = std::norm(out[k]);
        if (p > p_peak) {
            p_peak = p;
            k_peak = k;
        }
    }
    if (p_peak <= 1e-24) throw NumericError("no respiratory component");

    // parabolic refinement on the magnitude spectrum
    double km = k_peak;
    if (k_peak > 0 && k_peak < nfft / 2) {
        const double m0 = std::abs(out[k_peak - 1]);
        const double m1 = std::abs(out[k_peak]);
        const double m2 = std::abs(out[k_peak + 1]);
        const double denom = m0 - 2.0 * m1 + m2;
        if (denom < 0.0) km += 0.5 * (m0 - m2) / denom;
    }
    return km * df * 60.0;
}

RateErrors rate_metrics(const std::vector<double>& pred_bpm, const std::vector<double>& true_bpm) {
    if (pred_bpm.empty() || pred_bpm.size() != true_bpm.size())
        throw DataError("rate_metrics: empty or mismatched inputs");
    const double n = static_cast<double>(pred_bpm.size());
    double abs_sum = 0.0, sq_sum = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < pred_bpm.size(); ++i) {
        double e = pred_bpm[i] - true_bpm[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        sum += e;
    }
    RateErrors r;
    r.mae = abs_sum / n;
    r.rmse = std::sqrt(sq_sum / n);
    const double mean_e = sum / n;
    r.sd = std::sqrt(std::max(0.0, sq_sum / n - mean_e * mean_e));
    return r;
}

} // namespace resdiff::metrics
