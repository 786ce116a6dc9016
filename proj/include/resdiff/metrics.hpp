#ifndef RESDIFF_METRICS_HPP
#define RESDIFF_METRICS_HPP

#include <tuple>
#include <vector>

#include "resdiff/types.hpp"

namespace resdiff::metrics {

double cosine_similarity(const Vec& a, const Vec& b);

double mse(const Vec& a, const Vec& b);

// Dominant respiratory frequency (breaths/minute) of the zero-meaned
// waveform: zero-padded periodogram restricted to [low_hz, high_hz] with
// parabolic peak interpolation.
double estimate_rate(const Vec& waveform, double fs_hz, double low_hz = 0.1,
                     double high_hz = 0.7);

struct RateErrors {
    double mae = 0.0;
    double rmse = 0.0;
    double sd = 0.0; // population std of the signed errors
};

RateErrors rate_metrics(const std::vector<double>& pred_bpm, const std::vector<double>& true_bpm);

struct MetricsReport {
    double cs = 0.0;
    double mse = 0.0;
    double mae_bpm = 0.0;
    double rmse_bpm = 0.0;
    double sd_bpm = 0.0;
    int n_segments = 0;
};

} // namespace resdiff::metrics

#endif
