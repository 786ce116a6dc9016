#include "resdiff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

namespace resdiff::synth {

void BreathModel::validate() const {
    if (rate_bpm < 4.0 || rate_bpm > 40.0) throw ConfigError("breath: rate_bpm outside [4, 40]");
    if (!(amp_m > 0.0 && amp_m <= 0.01)) throw ConfigError("breath: amp_m outside (0, 0.01]");
    if (harmonic2 < 0.0 || harmonic2 >= 1.0) throw ConfigError("breath: harmonic2 outside [0, 1)");
    if (rate_drift < 0.0) throw ConfigError("breath: rate_drift must be >= 0");
}

EventKind event_kind_from_string(const std::string& s) {
    if (s == "burst") return EventKind::Burst;
    if (s == "drift") return EventKind::Drift;
    if (s == "tremor") return EventKind::Tremor;
    if (s == "step") return EventKind::Step;
    throw ConfigError("unknown micromotion kind: " + s);
}

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::Burst: return "burst";
        case EventKind::Drift: return "drift";
        case EventKind::Tremor: return "tremor";
        case EventKind::Step: return "step";
    }
    return "?";
}

Vec gen_respiration(const BreathModel& breath, double fs_hz, double duration_s, Rng& rng) {
    if (fs_hz <= 2.0 * breath.rate_bpm / 60.0)
        throw ConfigError("respiration: fs_hz must exceed twice the breathing rate");
    const int n = static_cast<int>(std::llround(duration_s * fs_hz));
    const double dt = 1.0 / fs_hz;
    const double lo = std::max(4.0, 0.7 * breath.rate_bpm);
    const double hi = std::min(40.0, 1.3 * breath.rate_bpm);
    Vec d(n);
    double rate = breath.rate_bpm;
    double theta = 0.0;
    for (int k = 0; k < n; ++k) {
        if (breath.rate_drift > 0.0) {
            rate += breath.rate_drift * std::sqrt(dt) * rng.normal();
            rate = std::clamp(rate, lo, hi);
        }
        theta += 2.0 * kPi * (rate / 60.0) * dt;
        d[k] = breath.amp_m *
               (std::sin(theta + breath.phase0) + breath.harmonic2 * std::sin(2.0 * theta));
    }
    return d;
}

namespace {

std::uint64_t event_param_hash(const MicromotionEvent& e) {
    auto bits = [](double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, sizeof(u));
        return u;
    };
    std::uint64_t h = 1469598103934665603ull;
    auto fold = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    fold(static_cast<std::uint64_t>(e.kind));
    fold(bits(e.start_s));
    fold(bits(e.duration_s));
    fold(bits(e.amp_m));
    fold(bits(e.freq_hz));
    return h;
}

// Catmull-Rom interpolation through uniformly spaced control values.
double catmull_rom(const std::vector<double>& p, double x) {
    const int n = static_cast<int>(p.size());
    int i = std::clamp(static_cast<int>(std::floor(x)), 0, n - 2);
    double u = x - i;
    double p0 = p[std::max(0, i - 1)], p1 = p[i], p2 = p[i + 1], p3 = p[std::min(n - 1, i + 2)];
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u * u * u);
}

void scale_to_peak(Vec& v, double amp) {
    double peak = v.cwiseAbs().maxCoeff();
    if (peak > 0.0) v *= amp / peak;
}

Vec render_event(const MicromotionEvent& e, double fs_hz, int n, Rng& rng) {
    Vec out = Vec::Zero(n);
    const double dt = 1.0 / fs_hz;
    const int k0 = std::max(0, static_cast<int>(std::floor(e.start_s * fs_hz)));
    const int k1 = std::min(n, static_cast<int>(std::ceil((e.start_s + e.duration_s) * fs_hz)));
    if (k1 <= k0) return out;

    switch (e.kind) {
        case EventKind::Burst: {
            // random spline under a Gaussian window
            const double ctrl_dt = 0.25;
            const int n_ctrl = std::max(4, static_cast<int>(std::ceil(e.duration_s / ctrl_dt)) + 2);
            std::vector<double> ctrl(n_ctrl);
            for (double& c : ctrl) c = rng.normal();
            const double center = e.start_s + 0.5 * e.duration_s;
            const double sigma = std::max(e.duration_s / 4.0, dt);
            for (int k = k0; k < k1; ++k) {
                double t = k * dt;
                double x = (t - e.start_s) / e.duration_s * (n_ctrl - 1);
                double w = std::exp(-0.5 * std::pow((t - center) / sigma, 2.0));
                out[k] = catmull_rom(ctrl, x) * w;
            }
            scale_to_peak(out, e.amp_m);
            break;
        }
        case EventKind::Drift: {
            // integrated low-pass noise with cosine tapers at the edges
            const double tau_s = 1.5;
            const double a = dt / (tau_s + dt);
            double lp = 0.0, acc = 0.0;
            const double taper = 0.1 * (k1 - k0);
            for (int k = k0; k < k1; ++k) {
                lp += a * (rng.normal() - lp);
                acc += lp * dt;
                double w = 1.0;
                double pos = k - k0, rem = k1 - 1 - k;
                if (pos < taper) w = 0.5 * (1.0 - std::cos(kPi * pos / taper));
                if (rem < taper) w = std::min(w, 0.5 * (1.0 - std::cos(kPi * rem / taper)));
                out[k] = acc * w;
            }
            scale_to_peak(out, e.amp_m);
            break;
        }
        case EventKind::Tremor: {
            for (int k = k0; k < k1; ++k) {
                double t = k * dt;
                out[k] = e.amp_m * std::sin(2.0 * kPi * e.freq_hz * (t - e.start_s));
            }
            break;
        }
        case EventKind::Step: {
            // posture shift: smooth ramp over the event, offset persists after
            for (int k = k0; k < n; ++k) {
                double t = k * dt;
                double u = std::clamp((t - e.start_s) / e.duration_s, 0.0, 1.0);
                out[k] = e.amp_m * 0.5 * (1.0 - std::cos(kPi * u));
            }
            break;
        }
    }
    return out;
}

} // namespace

Vec gen_micromotion(const std::vector<MicromotionEvent>& events, double fs_hz, double duration_s,
                    std::uint64_t seed) {
    const int n = static_cast<int>(std::llround(duration_s * fs_hz));
    Vec total = Vec::Zero(n);
    for (const auto& e : events) {
        if (e.duration_s <= 0.0) throw ConfigError("micromotion: duration_s must be > 0");
        if (e.start_s < 0.0 || e.start_s > duration_s)
            throw ConfigError("micromotion: event outside scene window");
        Rng rng = Rng::stream(seed, "event", event_param_hash(e));
        total += render_event(e, fs_hz, n, rng);
    }
    return total;
}

signal::RadarCube synth_iq(const Vec& total_displacement_m, const SceneConfig& scene, Rng& rng) {
    const RadarParams& r = scene.radar;
    const int n_frames = static_cast<int>(total_displacement_m.size());
    const int n_adc = r.adc_samples;
    const double bin_res = kSpeedOfLight / (2.0 * r.bandwidth_hz);
    const double max_range = bin_res * (n_adc / 2);
    const double lambda = kSpeedOfLight / r.carrier_hz;
    const double sigma = std::sqrt(std::pow(10.0, -scene.snr_db / 10.0));
    const double noise_sd = sigma / std::sqrt(2.0);

    signal::RadarCube cube;
    cube.iq.resize(n_adc, n_frames);
    cube.frame_period_s = r.frame_period_s;
    cube.sample_rate_hz = r.sample_rate_hz;
    cube.bandwidth_hz = r.bandwidth_hz;
    cube.carrier_hz = r.carrier_hz;

    for (int k = 0; k < n_frames; ++k) {
        const double range = scene.range_m + total_displacement_m[k];
        if (range <= 0.0 || range >= max_range)
            throw DataError("target range beyond maximum unambiguous range");
        // beat tone at bin range/bin_res, plus the displacement-carrying phase
        const double step = 2.0 * kPi * (range / bin_res) / n_adc;
        const double phi = 4.0 * kPi * range / lambda;
        for (int n_s = 0; n_s < n_adc; ++n_s) {
            double arg = step * n_s + phi;
            std::complex<double> sample(std::cos(arg), std::sin(arg));
            if (scene.snr_db < 190.0)
                sample += std::complex<double>(noise_sd * rng.normal(), noise_sd * rng.normal());
            cube.iq(n_s, k) = sample;
        }
    }
    return cube;
}

ScenePaths render_scene(const SceneConfig& scene) {
    scene.breath.validate();
    const double fs = 1.0 / scene.radar.frame_period_s;
    Rng breath_rng = Rng::stream(scene.seed, "breath");
    Rng iq_rng = Rng::stream(scene.seed, "iq");
    ScenePaths p;
    p.displacement_truth = gen_respiration(scene.breath, fs, scene.duration_s, breath_rng);
    Vec micro = gen_micromotion(scene.events, fs, scene.duration_s, scene.seed);
    p.displacement_total = p.displacement_truth + micro;
    p.cube = synth_iq(p.displacement_total, scene, iq_rng);
    return p;
}

std::vector<PairedRecord> make_paired_dataset(const std::vector<SceneConfig>& scenes,
                                              const signal::SegmentationConfig& seg_cfg,
                                              const signal::PipelineConfig& pipe_cfg,
                                              int n_threads) {
    std::vector<std::vector<PairedRecord>> per_scene(scenes.size());
    std::exception_ptr first_error;
    std::mutex err_mutex;

    auto worker = [&](std::size_t begin, std::size_t stride) {
        enable_fast_fp();
        for (std::size_t i = begin; i < scenes.size(); i += stride) {
            try {
                const auto& scene = scenes[i];
                const double fs = 1.0 / scene.radar.frame_period_s;
                ScenePaths paths = render_scene(scene);
                signal::PipelineResult pipe = signal::process_cube(paths.cube, pipe_cfg);
                auto y_segs = signal::segment(pipe.phase.samples, seg_cfg, fs);
                auto x_segs = signal::segment(paths.displacement_truth, seg_cfg, fs);
                per_scene[i].reserve(y_segs.size());
                for (std::size_t k = 0; k < y_segs.size(); ++k) {
                    PairedRecord rec;
                    rec.seg = signal::PairedSegment(signal::minmax_normalize(y_segs[k]),
                                                    signal::minmax_normalize(x_segs[k]));
                    rec.scene_index = static_cast<int>(i);
                    per_scene[i].push_back(std::move(rec));
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    n_threads = std::max(1, n_threads);
    if (n_threads == 1 || scenes.size() <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back(worker, static_cast<std::size_t>(t),
                              static_cast<std::size_t>(n_threads));
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<PairedRecord> out;
    for (auto& scene_records : per_scene)
        for (auto& rec : scene_records) out.push_back(std::move(rec));
    return out;
}

} // namespace resdiff::synth
