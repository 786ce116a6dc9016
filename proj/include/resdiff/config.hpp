#ifndef RESDIFF_CONFIG_HPP
#define RESDIFF_CONFIG_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdiff/diffusion.hpp"
#include "resdiff/rdt.hpp"
#include "resdiff/synth.hpp"
#include "resdiff/train.hpp"

namespace resdiff::config {

// One generator group in the `scene` list: expands to `count` scenes with
// per-scene parameters drawn deterministically from (run seed, scene seed).
struct SceneGroup {
    std::string role = "train"; // train | test
    int count = 1;
    double duration_s = 60.0;
    double range_m = 1.2;
    std::array<double, 2> snr_db{15.0, 30.0};
    std::uint64_t seed_start = 0;
    std::array<int, 2> events_per_scene{0, 4};
    std::array<double, 2> breath_rate_bpm{10.0, 25.0};
    std::array<double, 2> breath_amp_mm{2.0, 5.0};
    std::array<double, 2> harmonic2{0.0, 0.3};
    std::array<double, 2> rate_drift{0.01, 0.05};
    double event_amp_scale = 1.0;
};

struct EvalConfig {
    double band_low_hz = 0.1;
    double band_high_hz = 0.7;
    std::uint64_t seed = 0;
};

struct PathsConfig {
    std::string data_dir = "data";
    std::string out_dir = "out";
    bool write_cubes = true;
};

struct RunConfig {
    synth::RadarParams radar;
    std::vector<SceneGroup> scenes;
    double window_s = 20.0;
    double hop_s = 1.0;
    diffusion::DiffusionSettings diffusion;
    rdt::RdtConfig model;
    train::TrainConfig train;
    EvalConfig eval;
    PathsConfig paths;
    std::uint64_t seed = 0;

    double fs_slow_hz() const { return 1.0 / radar.frame_period_s; }
    signal::SegmentationConfig segmentation() const {
        return signal::SegmentationConfig::from_rate(window_s, hop_s, fs_slow_hz());
    }
    void validate() const;
};

// Defaults: 200 training scenes (seeds 0..199) and 40 test scenes (seeds
// 200..239) of 60 s each.
RunConfig default_config();

RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

// FNV-1a hash of the canonical serialized form, as a hex string.
std::string config_hash(const RunConfig& cfg);

// Materialize the scene list for a role ("train", "test" or "" for all).
std::vector<synth::SceneConfig> expand_scenes(const RunConfig& cfg, const std::string& role);

} // namespace resdiff::config

#endif
