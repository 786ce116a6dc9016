#include "resdiff/signal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unsupported/Eigen/FFT>

namespace resdiff::signal {

SegmentationConfig SegmentationConfig::from_rate(double window_s, double hop_s, double fs_hz) {
    SegmentationConfig cfg;
    cfg.window_s = window_s;
    cfg.hop_s = hop_s;
    cfg.segment_len = static_cast<int>(std::llround(window_s * fs_hz));
    cfg.validate(fs_hz);
    return cfg;
}

void SegmentationConfig::validate(double fs_hz) const {
    if (window_s <= 0 || hop_s <= 0) throw ConfigError("segmentation: window and hop must be > 0");
    if (hop_s > window_s) throw ConfigError("segmentation: hop must not exceed window");
    if (segment_len != static_cast<int>(std::llround(window_s * fs_hz)))
        throw ConfigError("segmentation: segment_len inconsistent with window_s * fs_hz");
    if (segment_len < 2) throw ConfigError("segmentation: segment too short");
}

PairedSegment::PairedSegment(Vec y_in, Vec x_in) : y(std::move(y_in)), x(std::move(x_in)) {
    if (x.size() > 0) {
        if (x.size() != y.size()) throw DataError("paired segment: length mismatch");
        z = y - x;
    }
}

CVec dft(const CVec& v) {
    if (v.size() == 0) throw DataError("empty input");
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(v.data(), v.data() + v.size());
    std::vector<std::complex<double>> out(in.size());
    fft.fwd(out, in);
    return Eigen::Map<const CVec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

RangeProfile range_fft(const CVec& frame, double bandwidth_hz) {
    if (frame.size() == 0) throw DataError("empty input");
    CVec full = dft(frame);
    RangeProfile p;
    p.bins = full.head(frame.size() / 2);
    p.bin_resolution_m = kSpeedOfLight / (2.0 * bandwidth_hz);
    return p;
}

CMat mti_filter(const CMat& profiles) {
    if (profiles.cols() < 2) throw DataError("insufficient frames");
    CVec mean = profiles.rowwise().mean();
    return profiles.colwise() - mean;
}

std::vector<RangeProfile> mti_filter(const std::vector<RangeProfile>& profiles) {
    if (profiles.size() < 2) throw DataError("insufficient frames");
    const Eigen::Index n_bins = profiles.front().bins.size();
    CMat m(n_bins, static_cast<Eigen::Index>(profiles.size()));
    for (std::size_t k = 0; k < profiles.size(); ++k) {
        if (profiles[k].bins.size() != n_bins) throw DataError("profile length mismatch");
        m.col(static_cast<Eigen::Index>(k)) = profiles[k].bins;
    }
    CMat filtered = mti_filter(m);
    std::vector<RangeProfile> out(profiles.size());
    for (std::size_t k = 0; k < profiles.size(); ++k) {
        out[k].bins = filtered.col(static_cast<Eigen::Index>(k));
        out[k].bin_resolution_m = profiles[k].bin_resolution_m;
    }
    return out;
}

std::vector<int> cfar_detect(const Vec& power, int guard, int train, double scale) {
    const int n = static_cast<int>(power.size());
    if (guard < 0 || train < 1 || 2 * (guard + train) >= n)
        throw DataError("window exceeds profile");
    if (scale <= 0) throw DataError("cfar: scale must be > 0");
    std::vector<int> hits;
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        int count = 0;
        for (int j = std::max(0, i - guard - train); j <= i - guard - 1; ++j) {
            sum += power[j];
            ++count;
        }
        for (int j = i + guard + 1; j <= std::min(n - 1, i + guard + train); ++j) {
            sum += power[j];
            ++count;
        }
        double noise = count > 0 ? sum / count : 0.0;
        if (power[i] > scale * noise) hits.push_back(i);
    }
    return hits;
}

int select_chest_bin(const std::vector<std::vector<int>>& detections_per_frame,
                     const std::vector<Vec>& powers) {
    std::map<int, int> counts;
    for (const auto& frame : detections_per_frame)
        for (int b : frame) ++counts[b];
    if (counts.empty()) throw DataError("no target detected");
    auto mean_power = [&](int bin) {
        double s = 0.0;
        for (const auto& p : powers) s += p[bin];
        return powers.empty() ? 0.0 : s / static_cast<double>(powers.size());
    };
    int best = -1, best_count = -1;
    double best_power = 0.0;
    for (const auto& [bin, count] : counts) {
        double mp = mean_power(bin);
        if (count > best_count || (count == best_count && mp > best_power)) {
            // map iteration is ascending in bin, so equal (count, power) keeps
            // the lowest index
            best = bin;
            best_count = count;
            best_power = mp;
        }
    }
    return best;
}

Vec extract_phase(const CVec& slow_time, int* zero_count) {
    if (slow_time.size() == 0) throw DataError("empty input");
    Vec phase(slow_time.size());
    int zeros = 0;
    for (Eigen::Index k = 0; k < slow_time.size(); ++k) {
        const auto v = slow_time[k];
        if (v.real() == 0.0 && v.imag() == 0.0) {
            phase[k] = 0.0;
            ++zeros;
        } else {
            phase[k] = std::atan2(v.imag(), v.real());
        }
    }
    if (zero_count) *zero_count = zeros;
    return phase;
}

PhaseSequence unwrap_phase(const Vec& wrapped, double fs_hz) {
    PhaseSequence seq;
    seq.fs_hz = fs_hz;
    seq.samples.resize(wrapped.size());
    if (wrapped.size() == 0) return seq;
    seq.samples[0] = wrapped[0];
    double offset = 0.0;
    for (Eigen::Index k = 1; k < wrapped.size(); ++k) {
        double d = wrapped[k] - wrapped[k - 1];
        if (d > kPi)
            offset -= 2.0 * kPi;
        else if (d < -kPi)
            offset += 2.0 * kPi;
        seq.samples[k] = wrapped[k] + offset;
    }
    return seq;
}

std::vector<Vec> segment(const Vec& seq, const SegmentationConfig& cfg, double fs_hz) {
    cfg.validate(fs_hz);
    const int len = static_cast<int>(seq.size());
    const int window = cfg.segment_len;
    const int hop = static_cast<int>(std::llround(cfg.hop_s * fs_hz));
    if (hop < 1) throw ConfigError("segmentation: hop shorter than one sample");
    if (len < window) throw DataError("sequence too short");
    std::vector<Vec> out;
    for (int start = 0; start + window <= len; start += hop)
        out.push_back(seq.segment(start, window));
    return out;
}

Vec minmax_normalize(const Vec& v) {
    if (v.size() == 0) throw DataError("empty input");
    const double lo = v.minCoeff();
    const double hi = v.maxCoeff();
    if (hi == lo) return Vec::Constant(v.size(), 0.5);
    return (v.array() - lo) / (hi - lo);
}

PipelineResult process_cube(const RadarCube& cube, const PipelineConfig& cfg) {
    const int n_frames = cube.n_frames();
    if (n_frames < 2) throw DataError("insufficient frames");

    const int n_bins = cube.adc_samples() / 2;
    CMat profiles(n_bins, n_frames);
    for (int k = 0; k < n_frames; ++k)
        profiles.col(k) = range_fft(cube.iq.col(k), cube.bandwidth_hz).bins;

    CMat clutter_free = mti_filter(profiles);

    std::vector<std::vector<int>> detections(n_frames);
    std::vector<Vec> powers(n_frames);
    for (int k = 0; k < n_frames; ++k) {
        powers[k] = clutter_free.col(k).cwiseAbs2();
        detections[k] = cfar_detect(powers[k], cfg.cfar_guard, cfg.cfar_train, cfg.cfar_scale);
    }

    PipelineResult res;
    res.chest_bin = select_chest_bin(detections, powers);
    for (const auto& d : detections)
        if (std::binary_search(d.begin(), d.end(), res.chest_bin)) ++res.frames_detecting_chest_bin;

    // Phase comes from the raw (pre-MTI) bin: mean subtraction in the complex
    // domain would distort the displacement phase it carries.
    CVec slow_time = profiles.row(res.chest_bin).transpose();
    Vec wrapped = extract_phase(slow_time, &res.zero_phase_samples);
    res.phase = unwrap_phase(wrapped, cube.fs_slow_hz());
    return res;
}

} // namespace resdiff::signal
