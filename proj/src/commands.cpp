#include "resdiff/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "resdiff/checkpoint.hpp"
#include "resdiff/eval.hpp"
#include "resdiff/svg.hpp"
#include "resdiff/train.hpp"
#include "resdiff/version.hpp"

namespace fs = std::filesystem;

namespace resdiff::cmd {

int thread_count() {
    if (const char* env = std::getenv("RESDIFF_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return std::min(n, 64);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(hw == 0 ? 1u : hw, 8u));
}

namespace {

std::string scene_stem(std::uint64_t seed) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%06llu", static_cast<unsigned long long>(seed));
    return buf;
}

} // namespace

void cmd_simulate(const config::RunConfig& cfg, const std::string& out_dir) {
    const fs::path root = out_dir.empty() ? fs::path(cfg.paths.data_dir) : fs::path(out_dir);
    fs::create_directories(root);

    auto scenes = config::expand_scenes(cfg, "");
    const auto seg_cfg = cfg.segmentation();
    const double fs_hz = cfg.fs_slow_hz();

    struct Entry {
        nlohmann::json j;
    };
    std::vector<Entry> entries(scenes.size());
    std::exception_ptr first_error;
    std::mutex err_mutex;

    // scene roles, aligned with expand_scenes output order
    std::vector<std::string> roles;
    for (const auto& g : cfg.scenes)
        for (int i = 0; i < g.count; ++i) roles.push_back(g.role);

    auto worker = [&](std::size_t begin, std::size_t stride) {
        enable_fast_fp();
        for (std::size_t i = begin; i < scenes.size(); i += stride) {
            try {
                const auto& scene = scenes[i];
                synth::ScenePaths paths = synth::render_scene(scene);
                signal::PipelineResult pipe = signal::process_cube(paths.cube);
                auto y_segs = signal::segment(pipe.phase.samples, seg_cfg, fs_hz);
                auto x_segs = signal::segment(paths.displacement_truth, seg_cfg, fs_hz);
                std::vector<signal::PairedSegment> segs;
                segs.reserve(y_segs.size());
                for (std::size_t k = 0; k < y_segs.size(); ++k)
                    segs.emplace_back(signal::minmax_normalize(y_segs[k]),
                                      signal::minmax_normalize(x_segs[k]));

                const std::string stem = scene_stem(scene.seed);
                const std::string seg_file = stem + "_segments.csv";
                data::write_segments_csv((root / seg_file).string(), segs);
                std::string cube_file;
                if (cfg.paths.write_cubes) {
                    cube_file = stem + "_cube";
                    data::write_cube((root / cube_file).string(), paths.cube);
                }
                const int expected_bin = static_cast<int>(
                    std::llround(scene.range_m / paths.cube.bin_resolution_m()));
                entries[i].j = {{"id", scene.seed},
                                {"role", roles[i]},
                                {"seed", scene.seed},
                                {"segments", seg_file},
                                {"cube", cube_file},
                                {"n_segments", segs.size()},
                                {"chest_bin", pipe.chest_bin},
                                {"expected_bin", expected_bin},
                                {"duration_s", scene.duration_s},
                                {"snr_db", scene.snr_db},
                                {"n_events", scene.events.size()}};
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int nt = std::max(1, thread_count());
    if (nt == 1 || scenes.size() <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back(worker, static_cast<std::size_t>(t), static_cast<std::size_t>(nt));
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    nlohmann::json manifest;
    manifest["artifact"] = kVersion;
    manifest["config_hash"] = config::config_hash(cfg);
    manifest["seed"] = cfg.seed;
    manifest["fs_hz"] = fs_hz;
    manifest["segment_len"] = seg_cfg.segment_len;
    manifest["window_s"] = cfg.window_s;
    manifest["hop_s"] = cfg.hop_s;
    nlohmann::json scene_list = nlohmann::json::array();
    int n_train = 0, n_test = 0;
    for (const auto& e : entries) {
        scene_list.push_back(e.j);
        if (e.j["role"] == "train")
            ++n_train;
        else
            ++n_test;
    }
    manifest["scenes"] = scene_list;
    std::ofstream mf(root / "manifest.json");
    if (!mf) throw DataError("cannot write manifest.json");
    mf << manifest.dump(2) << "\n";
    std::printf("simulate: %d train + %d test scenes -> %s\n", n_train, n_test,
                root.string().c_str());
}

data::Dataset load_dataset(const std::string& data_dir, const std::string& role) {
    const fs::path root(data_dir);
    std::ifstream mf(root / "manifest.json");
    if (!mf) throw DataError("cannot open manifest in " + data_dir);
    nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, false);
    if (manifest.is_discarded()) throw DataError("invalid manifest in " + data_dir);

    // scene disjointness across roles
    std::set<std::uint64_t> train_ids, test_ids;
    for (const auto& s : manifest.at("scenes")) {
        if (s.at("role") == "train")
            train_ids.insert(s.at("id").get<std::uint64_t>());
        else
            test_ids.insert(s.at("id").get<std::uint64_t>());
    }
    for (auto id : train_ids)
        if (test_ids.count(id))
            throw DataError("scene " + std::to_string(id) + " appears in both train and test");

    data::Dataset ds;
    for (const auto& s : manifest.at("scenes")) {
        if (!role.empty() && s.at("role") != role) continue;
        auto segs = data::load_segments_csv((root / s.at("segments").get<std::string>()).string());
        for (auto& seg : segs) {
            ds.segments.push_back(std::move(seg));
            ds.scene_ids.push_back(static_cast<int>(s.at("id").get<std::uint64_t>()));
        }
    }
    if (ds.segments.empty()) throw DataError("no segments with role '" + role + "' in " + data_dir);
    return ds;
}

void cmd_train(const config::RunConfig& cfg, const TrainOptions& opt) {
    data::Dataset ds = load_dataset(opt.data_dir.empty() ? cfg.paths.data_dir : opt.data_dir,
                                    "train");

    rdt::RdtConfig model_cfg = rdt::RdtConfig::make_variant(cfg.model, opt.ablation);
    rdt::RdtModel<float> model(model_cfg);
    int start_epoch = 0;
    std::int64_t prior_steps = 0;
    if (!opt.resume_path.empty()) {
        auto [loaded, meta] = ckpt::load_checkpoint<float>(opt.resume_path);
        if (meta.model.variant_name() != model_cfg.variant_name())
            throw ConfigError("resume: checkpoint ablation '" + meta.model.variant_name() +
                              "' does not match requested '" + model_cfg.variant_name() + "'");
        model = std::move(loaded);
        start_epoch = meta.epoch;
        prior_steps = meta.train_step;
        std::printf("resume: %s at epoch %d\n", opt.resume_path.c_str(), start_epoch);
    } else {
        Rng init_rng = Rng::stream(cfg.train.seed, "init");
        model.params().init_default(init_rng);
    }
    std::printf("model: variant=%s parameters=%lld\n", model_cfg.variant_name().c_str(),
                static_cast<long long>(model.params().size()));

    train::TrainConfig tc = cfg.train;
    if (opt.epochs_override > 0) tc.epochs = opt.epochs_override;

    auto sched = diffusion::NoiseSchedule::make(cfg.diffusion);
    auto result = train::train(model, ds, sched, tc, thread_count(), start_epoch,
                               [](const train::EpochStats& s) {
                                   std::printf("epoch %3d  train %.5f  val %.5f  lr %.5g\n",
                                               s.epoch, s.train_loss, s.val_loss, s.lr);
                                   std::fflush(stdout);
                               });

    const fs::path ckpt_path =
        opt.out_ckpt.empty() ? fs::path(cfg.paths.out_dir) / "model.ckpt" : fs::path(opt.out_ckpt);
    if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
    ckpt::save_checkpoint(ckpt_path.string(), model, cfg.diffusion, start_epoch + tc.epochs,
                          prior_steps + result.steps);
    train::write_history_csv(ckpt_path.string() + ".history.csv", result.history);
    std::printf("train: best val %.6f (epoch %d) -> %s\n", result.best_val_loss,
                result.best_epoch, ckpt_path.string().c_str());
}

void cmd_reconstruct(const config::RunConfig& cfg, const ReconstructOptions& opt) {
    auto [model, meta] = ckpt::load_checkpoint<float>(opt.ckpt_path);
    auto segs = data::load_segments_csv(opt.segments_csv);
    const int l = model.config().seq_len;
    for (std::size_t i = 0; i < segs.size(); ++i)
        if (segs[i].y.size() != l)
            throw DataError("segment row " + std::to_string(i) + " has length " +
                            std::to_string(segs[i].y.size()) + ", model expects " +
                            std::to_string(l));

    const int steps = opt.steps_override > 0 ? opt.steps_override : meta.diffusion.sample_steps;
    auto sched = diffusion::NoiseSchedule::make(meta.diffusion);
    auto respaced = diffusion::RespacedSchedule::make(sched, steps);

    const fs::path out(opt.out_csv);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::FILE* f = std::fopen(opt.out_csv.c_str(), "w");
    if (!f) throw DataError("cannot write " + opt.out_csv);
    std::fprintf(f, "# %s reconstruct steps=%d seed=%llu ablation=%s config=%s\n", kVersion,
                 steps, static_cast<unsigned long long>(cfg.seed), meta.ablation.c_str(),
                 config::config_hash(cfg).c_str());
    std::fputs("idx", f);
    for (int i = 0; i < l; ++i) std::fprintf(f, ",xhat_%d", i);
    std::fputc('\n', f);

    std::vector<Vec> xhats(segs.size());
    const int nt = thread_count();
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&](std::size_t begin, std::size_t stride) {
        enable_fast_fp();
        try {
            for (std::size_t i = begin; i < segs.size(); i += stride) {
                Rng rng = Rng::stream(cfg.seed, "reconstruct", i);
                VecX<float> yf = segs[i].y.cast<float>();
                xhats[i] = eval::reconstruct<float>(model, yf, respaced, rng).cast<double>();
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    if (nt == 1 || segs.size() <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back(worker, static_cast<std::size_t>(t), static_cast<std::size_t>(nt));
        for (auto& th : pool) th.join();
    }
    if (first_error) {
        std::fclose(f);
        std::rethrow_exception(first_error);
    }

    for (std::size_t i = 0; i < segs.size(); ++i) {
        std::fprintf(f, "%zu", i);
        for (int c = 0; c < l; ++c) std::fprintf(f, ",%.9g", xhats[i][c]);
        std::fputc('\n', f);
    }
    std::fclose(f);

    if (opt.plot) {
        const fs::path plot_dir = out.parent_path() / (out.stem().string() + "_plots");
        fs::create_directories(plot_dir);
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const Vec* truth = segs[i].x.size() ? &segs[i].x : nullptr;
            svg::write_overlay((plot_dir / ("segment_" + std::to_string(i) + ".svg")).string(),
                               segs[i].y, xhats[i], truth, "segment " + std::to_string(i));
        }
    }
    std::printf("reconstruct: %zu segments -> %s\n", segs.size(), opt.out_csv.c_str());
}

metrics::MetricsReport cmd_evaluate(const config::RunConfig& cfg, const EvaluateOptions& opt) {
    data::Dataset ds = load_dataset(opt.data_dir.empty() ? cfg.paths.data_dir : opt.data_dir,
                                    "test");

    eval::EvalOptions eo;
    eo.fs_hz = cfg.fs_slow_hz();
    eo.band_low_hz = cfg.eval.band_low_hz;
    eo.band_high_hz = cfg.eval.band_high_hz;
    eo.seed = cfg.eval.seed;
    eo.n_threads = thread_count();
    eo.sample_steps =
        opt.steps_override > 0 ? opt.steps_override : cfg.diffusion.sample_steps;

    metrics::MetricsReport rep;
    std::string mode_name;
    auto sched = diffusion::NoiseSchedule::make(cfg.diffusion);
    if (opt.oracle) {
        mode_name = "oracle";
        rep = eval::evaluate(nullptr, sched, ds, eval::Mode::Oracle, eo);
    } else if (opt.baseline == "bpf") {
        mode_name = "bpf";
        rep = eval::evaluate(nullptr, sched, ds, eval::Mode::Bpf, eo);
    } else if (!opt.baseline.empty()) {
        throw ConfigError("unknown baseline: " + opt.baseline);
    } else {
        if (opt.ckpt_path.empty()) throw ConfigError("evaluate: --ckpt required in model mode");
        auto [model, meta] = ckpt::load_checkpoint<float>(opt.ckpt_path);
        if (opt.steps_override == 0) eo.sample_steps = meta.diffusion.sample_steps;
        auto model_sched = diffusion::NoiseSchedule::make(meta.diffusion);
        mode_name = "model:" + meta.ablation;
        rep = eval::evaluate(&model, model_sched, ds, eval::Mode::Model, eo);
    }

    nlohmann::json out = {{"artifact", kVersion},
                          {"config_hash", config::config_hash(cfg)},
                          {"mode", mode_name},
                          {"checkpoint", opt.ckpt_path},
                          {"sample_steps", eo.sample_steps},
                          {"seed", eo.seed},
                          {"n_segments", rep.n_segments},
                          {"cs", rep.cs},
                          {"mse", rep.mse},
                          {"mae_bpm", rep.mae_bpm},
                          {"rmse_bpm", rep.rmse_bpm},
                          {"sd_bpm", rep.sd_bpm}};
    if (!opt.out_json.empty()) {
        const fs::path out_path(opt.out_json);
        if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
        std::ofstream jf(opt.out_json);
        if (!jf) throw DataError("cannot write " + opt.out_json);
        jf << out.dump(2) << "\n";
        // companion CSV row
        std::ofstream cf(out_path.string() + ".csv");
        cf << "mode,n_segments,cs,mse,mae_bpm,rmse_bpm,sd_bpm\n";
        char row[256];
        std::snprintf(row, sizeof(row), "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", mode_name.c_str(),
                      rep.n_segments, rep.cs, rep.mse, rep.mae_bpm, rep.rmse_bpm, rep.sd_bpm);
        cf << row;
    }
    std::printf("evaluate[%s]: CS %.4f  MSE %.5f  MAE %.3f BPM  RMSE %.3f  SD %.3f  (n=%d)\n",
                mode_name.c_str(), rep.cs, rep.mse, rep.mae_bpm, rep.rmse_bpm, rep.sd_bpm,
                rep.n_segments);
    return rep;
}

} // namespace resdiff::cmd
