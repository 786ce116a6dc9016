#include "resdiff/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "resdiff/checkpoint.hpp"

namespace resdiff::config {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

std::array<double, 2> range_of(const json& v, const std::string& where) {
    std::array<double, 2> r{};
    if (v.is_number()) {
        r[0] = r[1] = v.get<double>();
    } else if (v.is_array() && v.size() == 2) {
        r[0] = v[0].get<double>();
        r[1] = v[1].get<double>();
    } else {
        throw ConfigError(where + ": expected a number or [lo, hi]");
    }
    if (r[0] > r[1]) throw ConfigError(where + ": lo > hi");
    return r;
}

std::array<int, 2> irange_of(const json& v, const std::string& where) {
    auto r = range_of(v, where);
    return {static_cast<int>(r[0]), static_cast<int>(r[1])};
}

double draw(Rng& rng, const std::array<double, 2>& r) {
    return r[0] == r[1] ? r[0] : rng.uniform(r[0], r[1]);
}

} // namespace

void RunConfig::validate() const {
    if (radar.adc_samples < 8) throw ConfigError("radar: adc_samples too small");
    if (radar.sample_rate_hz <= 0 || radar.bandwidth_hz <= 0 || radar.carrier_hz <= 0 ||
        radar.frame_period_s <= 0)
        throw ConfigError("radar: rates and bandwidth must be positive");
    if (scenes.empty()) throw ConfigError("scene: at least one group required");
    for (const auto& g : scenes) {
        if (g.role != "train" && g.role != "test")
            throw ConfigError("scene: role must be train or test");
        if (g.count < 1) throw ConfigError("scene: count must be >= 1");
        if (g.duration_s < window_s) throw ConfigError("scene: duration shorter than one window");
    }
    segmentation(); // throws on inconsistency
    const int expect_len = static_cast<int>(std::llround(window_s * fs_slow_hz()));
    if (model.seq_len != expect_len)
        throw ConfigError("model: seq_len must equal window_s * slow-time rate (" +
                          std::to_string(expect_len) + ")");
    model.validate();
    train.validate();
    if (!(eval.band_low_hz > 0 && eval.band_low_hz < eval.band_high_hz &&
          eval.band_high_hz < fs_slow_hz() / 2))
        throw ConfigError("eval: invalid rate band");
    if (diffusion.sample_steps < 2 || diffusion.sample_steps > diffusion.T)
        throw ConfigError("diffusion: sample_steps out of range");
    diffusion::NoiseSchedule::make(diffusion); // validates schedule parameters
}

RunConfig default_config() {
    RunConfig cfg;
    SceneGroup train_group;
    train_group.role = "train";
    train_group.count = 200;
    train_group.seed_start = 0;
    SceneGroup test_group = train_group;
    test_group.role = "test";
    test_group.count = 40;
    test_group.seed_start = 200;
    cfg.scenes = {train_group, test_group};
    return cfg;
}

RunConfig config_from_json(const nlohmann::json& j) {
    check_keys(j, "config",
               {"radar", "scene", "segmentation", "diffusion", "model", "train", "eval", "paths",
                "seed"});
    RunConfig cfg = default_config();

    if (j.contains("radar")) {
        const auto& r = j["radar"];
        check_keys(r, "radar",
                   {"adc_samples", "sample_rate_hz", "frame_period_s", "bandwidth_hz",
                    "carrier_hz"});
        cfg.radar.adc_samples = r.value("adc_samples", cfg.radar.adc_samples);
        cfg.radar.sample_rate_hz = r.value("sample_rate_hz", cfg.radar.sample_rate_hz);
        cfg.radar.frame_period_s = r.value("frame_period_s", cfg.radar.frame_period_s);
        cfg.radar.bandwidth_hz = r.value("bandwidth_hz", cfg.radar.bandwidth_hz);
        cfg.radar.carrier_hz = r.value("carrier_hz", cfg.radar.carrier_hz);
    }
    if (j.contains("scene")) {
        if (!j["scene"].is_array()) throw ConfigError("scene: expected a list of groups");
        cfg.scenes.clear();
        int gi = 0;
        for (const auto& gj : j["scene"]) {
            const std::string where = "scene[" + std::to_string(gi++) + "]";
            check_keys(gj, where,
                       {"role", "count", "duration_s", "range_m", "snr_db", "seed_start",
                        "events_per_scene", "breath_rate_bpm", "breath_amp_mm", "harmonic2",
                        "rate_drift", "event_amp_scale"});
            SceneGroup g;
            g.role = gj.value("role", g.role);
            g.count = gj.value("count", g.count);
            g.duration_s = gj.value("duration_s", g.duration_s);
            g.range_m = gj.value("range_m", g.range_m);
            g.seed_start = gj.value("seed_start", g.seed_start);
            g.event_amp_scale = gj.value("event_amp_scale", g.event_amp_scale);
            if (gj.contains("snr_db")) g.snr_db = range_of(gj["snr_db"], where + ".snr_db");
            if (gj.contains("events_per_scene"))
                g.events_per_scene = irange_of(gj["events_per_scene"], where + ".events_per_scene");
            if (gj.contains("breath_rate_bpm"))
                g.breath_rate_bpm = range_of(gj["breath_rate_bpm"], where + ".breath_rate_bpm");
            if (gj.contains("breath_amp_mm"))
                g.breath_amp_mm = range_of(gj["breath_amp_mm"], where + ".breath_amp_mm");
            if (gj.contains("harmonic2"))
                g.harmonic2 = range_of(gj["harmonic2"], where + ".harmonic2");
            if (gj.contains("rate_drift"))
                g.rate_drift = range_of(gj["rate_drift"], where + ".rate_drift");
            cfg.scenes.push_back(g);
        }
    }
    if (j.contains("segmentation")) {
        const auto& s = j["segmentation"];
        check_keys(s, "segmentation", {"window_s", "hop_s"});
        cfg.window_s = s.value("window_s", cfg.window_s);
        cfg.hop_s = s.value("hop_s", cfg.hop_s);
    }
    if (j.contains("diffusion")) {
        check_keys(j["diffusion"], "diffusion", {"T", "eta1", "etaT", "p", "kappa", "sample_steps"});
        cfg.diffusion = ckpt::diffusion_from_json(j["diffusion"]);
    }
    if (j.contains("model")) {
        const auto& mj = j["model"];
        check_keys(mj, "model",
                   {"seq_len", "num_tokens", "hidden_dim", "num_blocks", "num_heads",
                    "band_radius", "timestep_embed_dim"});
        rdt::RdtConfig m = cfg.model;
        m.seq_len = mj.value("seq_len", m.seq_len);
        m.num_tokens = mj.value("num_tokens", m.num_tokens);
        m.hidden_dim = mj.value("hidden_dim", m.hidden_dim);
        m.num_blocks = mj.value("num_blocks", m.num_blocks);
        m.num_heads = mj.value("num_heads", m.num_heads);
        m.band_radius = mj.value("band_radius", m.band_radius);
        m.timestep_embed_dim = mj.value("timestep_embed_dim", m.timestep_embed_dim);
        cfg.model = m;
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t, "train",
                   {"epochs", "batch_size", "initial_lr", "lr_reduce_factor", "patience",
                    "weight_decay", "grad_clip", "seed", "checkpoint_every", "beta1", "beta2",
                    "val_fraction"});
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.initial_lr = t.value("initial_lr", cfg.train.initial_lr);
        cfg.train.lr_reduce_factor = t.value("lr_reduce_factor", cfg.train.lr_reduce_factor);
        cfg.train.patience = t.value("patience", cfg.train.patience);
        cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
        cfg.train.grad_clip = t.value("grad_clip", cfg.train.grad_clip);
        cfg.train.seed = t.value("seed", cfg.train.seed);
        cfg.train.checkpoint_every = t.value("checkpoint_every", cfg.train.checkpoint_every);
        cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
        cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
        cfg.train.val_fraction = t.value("val_fraction", cfg.train.val_fraction);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        check_keys(e, "eval", {"band_low_hz", "band_high_hz", "seed"});
        cfg.eval.band_low_hz = e.value("band_low_hz", cfg.eval.band_low_hz);
        cfg.eval.band_high_hz = e.value("band_high_hz", cfg.eval.band_high_hz);
        cfg.eval.seed = e.value("seed", cfg.eval.seed);
    }
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        check_keys(p, "paths", {"data_dir", "out_dir", "write_cubes"});
        cfg.paths.data_dir = p.value("data_dir", cfg.paths.data_dir);
        cfg.paths.out_dir = p.value("out_dir", cfg.paths.out_dir);
        cfg.paths.write_cubes = p.value("write_cubes", cfg.paths.write_cubes);
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();

    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
    return config_from_json(j);
}

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& g : cfg.scenes) {
        scenes.push_back({{"role", g.role},
                          {"count", g.count},
                          {"duration_s", g.duration_s},
                          {"range_m", g.range_m},
                          {"snr_db", g.snr_db},
                          {"seed_start", g.seed_start},
                          {"events_per_scene", g.events_per_scene},
                          {"breath_rate_bpm", g.breath_rate_bpm},
                          {"breath_amp_mm", g.breath_amp_mm},
                          {"harmonic2", g.harmonic2},
                          {"rate_drift", g.rate_drift},
                          {"event_amp_scale", g.event_amp_scale}});
    }
    nlohmann::json model = ckpt::rdt_config_to_json(cfg.model);
    model.erase("ablation");
    return {{"radar",
             {{"adc_samples", cfg.radar.adc_samples},
              {"sample_rate_hz", cfg.radar.sample_rate_hz},
              {"frame_period_s", cfg.radar.frame_period_s},
              {"bandwidth_hz", cfg.radar.bandwidth_hz},
              {"carrier_hz", cfg.radar.carrier_hz}}},
            {"scene", scenes},
            {"segmentation", {{"window_s", cfg.window_s}, {"hop_s", cfg.hop_s}}},
            {"diffusion", ckpt::diffusion_to_json(cfg.diffusion)},
            {"model", model},
            {"train",
             {{"epochs", cfg.train.epochs},
              {"batch_size", cfg.train.batch_size},
              {"initial_lr", cfg.train.initial_lr},
              {"lr_reduce_factor", cfg.train.lr_reduce_factor},
              {"patience", cfg.train.patience},
              {"weight_decay", cfg.train.weight_decay},
              {"grad_clip", cfg.train.grad_clip},
              {"seed", cfg.train.seed},
              {"checkpoint_every", cfg.train.checkpoint_every},
              {"beta1", cfg.train.beta1},
              {"beta2", cfg.train.beta2},
              {"val_fraction", cfg.train.val_fraction}}},
            {"eval",
             {{"band_low_hz", cfg.eval.band_low_hz},
              {"band_high_hz", cfg.eval.band_high_hz},
              {"seed", cfg.eval.seed}}},
            {"paths",
             {{"data_dir", cfg.paths.data_dir},
              {"out_dir", cfg.paths.out_dir},
              {"write_cubes", cfg.paths.write_cubes}}},
            {"seed", cfg.seed}};
}

std::string config_hash(const RunConfig& cfg) {
    const std::string s = to_json(cfg).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<synth::SceneConfig> expand_scenes(const RunConfig& cfg, const std::string& role) {
    std::vector<synth::SceneConfig> out;
    std::set<std::uint64_t> seen_seeds;
    for (const auto& g : cfg.scenes) {
        for (int i = 0; i < g.count; ++i) {
            const std::uint64_t scene_seed = g.seed_start + static_cast<std::uint64_t>(i);
            if (!seen_seeds.insert(scene_seed).second)
                throw ConfigError("scene: duplicate scene seed " + std::to_string(scene_seed) +
                                  " across groups (train/test must be disjoint)");
            if (!role.empty() && g.role != role) continue;
            Rng rng = Rng::stream(cfg.seed, "scene_params", scene_seed);
            synth::SceneConfig s;
            s.radar = cfg.radar;
            s.range_m = g.range_m;
            s.duration_s = g.duration_s;
            s.seed = scene_seed;
            s.breath.rate_bpm = draw(rng, g.breath_rate_bpm);
            s.breath.amp_m = draw(rng, g.breath_amp_mm) * 1e-3;
            s.breath.harmonic2 = draw(rng, g.harmonic2);
            s.breath.rate_drift = draw(rng, g.rate_drift);
            s.breath.phase0 = rng.uniform(0.0, 2.0 * kPi);
            s.snr_db = draw(rng, g.snr_db);
            const int span = g.events_per_scene[1] - g.events_per_scene[0];
            const int n_events =
                g.events_per_scene[0] +
                (span > 0 ? static_cast<int>(rng.integer(static_cast<std::uint64_t>(span + 1)))
                          : 0);
            for (int e = 0; e < n_events; ++e) {
                synth::MicromotionEvent ev;
                // amplitudes stay below the slow-time phase-wrap limit so the
                // corruption is distortion, not aliasing
                switch (rng.integer(4)) {
                    case 0:
                        ev.kind = synth::EventKind::Burst;
                        ev.duration_s = rng.uniform(2.0, 8.0);
                        ev.amp_m = rng.uniform(1.0, 2.5) * 1e-3;
                        break;
                    case 1:
                        ev.kind = synth::EventKind::Drift;
                        ev.duration_s = rng.uniform(10.0, 40.0);
                        ev.amp_m = rng.uniform(2.0, 8.0) * 1e-3;
                        break;
                    case 2:
                        ev.kind = synth::EventKind::Tremor;
                        ev.duration_s = rng.uniform(3.0, 10.0);
                        ev.amp_m = rng.uniform(0.3, 0.9) * 1e-3;
                        ev.freq_hz = rng.uniform(2.0, 4.0);
                        break;
                    default:
                        ev.kind = synth::EventKind::Step;
                        ev.duration_s = rng.uniform(0.5, 2.0);
                        ev.amp_m = rng.uniform(2.0, 6.0) * 1e-3;
                        break;
                }
                ev.amp_m *= g.event_amp_scale;
                ev.duration_s = std::min(ev.duration_s, g.duration_s);
                ev.start_s = rng.uniform(0.0, g.duration_s - ev.duration_s);
                s.events.push_back(ev);
            }
            out.push_back(std::move(s));
        }
    }
    if (out.empty() && !role.empty()) throw ConfigError("scene: no groups with role " + role);
    return out;
}

} // namespace resdiff::config
