#ifndef RESDIFF_SYNTH_HPP
#define RESDIFF_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "resdiff/rng.hpp"
#include "resdiff/signal.hpp"
#include "resdiff/types.hpp"

namespace resdiff::synth {

struct BreathModel {
    double rate_bpm = 15.0;
    double amp_m = 0.003;
    double harmonic2 = 0.2; // relative 2nd-harmonic amplitude in [0, 1)
    double rate_drift = 0.0; // random-walk std of the rate, bpm per sqrt(s)
    double phase0 = 0.0;

    void validate() const;
};

enum class EventKind { Burst, Drift, Tremor, Step };

EventKind event_kind_from_string(const std::string& s);
std::string to_string(EventKind k);

struct MicromotionEvent {
    EventKind kind = EventKind::Burst;
    double start_s = 0.0;
    double duration_s = 1.0;
    double amp_m = 0.002;
    double freq_hz = 4.0; // tremor only
};

struct RadarParams {
    int adc_samples = 512;
    double sample_rate_hz = 10e6;
    double frame_period_s = 0.05;
    double bandwidth_hz = 2e9;
    double carrier_hz = 60e9;
};

struct SceneConfig {
    BreathModel breath;
    std::vector<MicromotionEvent> events;
    double range_m = 1.2;
    double snr_db = 25.0;
    double duration_s = 60.0;
    RadarParams radar;
    std::uint64_t seed = 0;
};

// Chest displacement from breathing (meters, sampled at fs_hz). The rate
// follows a bounded random walk; the phase is accumulated so drift never
// produces frequency spikes.
Vec gen_respiration(const BreathModel& breath, double fs_hz, double duration_s, Rng& rng);

// Sum of micromotion event waveforms (meters). Each event renders from its
// own parameter-keyed RNG stream, so renders superpose exactly.
Vec gen_micromotion(const std::vector<MicromotionEvent>& events, double fs_hz, double duration_s,
                    std::uint64_t seed);

// FMCW beat-signal cube for a point target at range_m + displacement(k),
// with complex white noise at snr_db.
signal::RadarCube synth_iq(const Vec& total_displacement_m, const SceneConfig& scene, Rng& rng);

struct ScenePaths {
    Vec displacement_total; // what the radar saw
    Vec displacement_truth; // breathing only
    signal::RadarCube cube;
};

// Renders one scene: respiration + micromotion -> I/Q cube.
ScenePaths render_scene(const SceneConfig& scene);

struct PairedRecord {
    signal::PairedSegment seg;
    int scene_index = 0;
};

// Runs the I/Q path through the signal pipeline and the truth path through
// the identical segmentation/normalization, producing index-aligned pairs.
std::vector<PairedRecord> make_paired_dataset(const std::vector<SceneConfig>& scenes,
                                              const signal::SegmentationConfig& seg_cfg,
                                              const signal::PipelineConfig& pipe_cfg = {},
                                              int n_threads = 1);

} // namespace resdiff::synth

#endif
