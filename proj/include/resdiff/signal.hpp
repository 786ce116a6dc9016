#ifndef RESDIFF_SIGNAL_HPP
#define RESDIFF_SIGNAL_HPP

#include <string>
#include <vector>

#include "resdiff/types.hpp"

namespace resdiff::signal {

// Raw radar capture: one chirp per frame, frames are columns of `iq`
// (fast-time samples down the rows). The slow-time rate is 1/frame_period_s.
struct RadarCube {
    CMat iq; // adc_samples x n_frames
    double frame_period_s = 0.05;
    double sample_rate_hz = 10e6;
    double bandwidth_hz = 2e9;
    double carrier_hz = 60e9;

    int adc_samples() const { return static_cast<int>(iq.rows()); }
    int n_frames() const { return static_cast<int>(iq.cols()); }
    double fs_slow_hz() const { return 1.0 / frame_period_s; }
    double bin_resolution_m() const { return kSpeedOfLight / (2.0 * bandwidth_hz); }
    double max_range_m() const { return bin_resolution_m() * (adc_samples() / 2); }
};

struct RangeProfile {
    CVec bins;
    double bin_resolution_m = 0.0;
};

struct PhaseSequence {
    Vec samples; // radians, unwrapped
    double fs_hz = 20.0;
};

struct SegmentationConfig {
    double window_s = 20.0;
    double hop_s = 1.0;
    int segment_len = 400; // = round(window_s * fs_hz)

    static SegmentationConfig from_rate(double window_s, double hop_s, double fs_hz);
    void validate(double fs_hz) const;
};

// Aligned observation/ground-truth pair; z = y - x is cached on construction.
struct PairedSegment {
    Vec y;
    Vec x; // empty at pure inference
    Vec z;

    PairedSegment() = default;
    PairedSegment(Vec y_in, Vec x_in);
};

// Unnormalized forward DFT (two-sided, same length as input).
CVec dft(const CVec& v);

// Range FFT of one frame, truncated to the one-sided half (real ranges).
RangeProfile range_fft(const CVec& frame, double bandwidth_hz);

// Clutter suppression: remove the per-bin slow-time mean over the block.
std::vector<RangeProfile> mti_filter(const std::vector<RangeProfile>& profiles);
CMat mti_filter(const CMat& profiles); // bins x frames

// Cell-averaging CFAR over a power profile. Edge cells use whatever training
// cells are available.
std::vector<int> cfar_detect(const Vec& power, int guard, int train, double scale);

// Most frequently detected bin across frames; ties broken by higher mean
// power, then lower index.
int select_chest_bin(const std::vector<std::vector<int>>& detections_per_frame,
                     const std::vector<Vec>& powers);

// Per-sample four-quadrant phase in (-pi, pi]. Zero-magnitude samples map to
// phase 0 and are counted in *zero_count when provided.
Vec extract_phase(const CVec& slow_time, int* zero_count = nullptr);

// Standard 1-D unwrap: successive differences are brought into [-pi, pi].
PhaseSequence unwrap_phase(const Vec& wrapped, double fs_hz);

// Sliding-window segmentation at offsets 0, hop, 2*hop, ...; trailing partial
// window discarded.
std::vector<Vec> segment(const Vec& seq, const SegmentationConfig& cfg, double fs_hz);

// Min-max normalization to [0, 1]; constant input maps to all-0.5.
Vec minmax_normalize(const Vec& v);

struct PipelineConfig {
    int cfar_guard = 2;
    int cfar_train = 8;
    double cfar_scale = 5.0;
};

// Full cube -> unwrapped chest-bin phase. MTI + CFAR drive bin selection; the
// phase itself is read from the pre-MTI profiles so the absolute displacement
// phase is preserved.
struct PipelineResult {
    int chest_bin = -1;
    PhaseSequence phase;
    int zero_phase_samples = 0;
    int frames_detecting_chest_bin = 0; // frames whose CFAR set contains chest_bin
};

PipelineResult process_cube(const RadarCube& cube, const PipelineConfig& cfg = {});

} // namespace resdiff::signal

#endif
