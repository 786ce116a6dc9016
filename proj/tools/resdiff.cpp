#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "resdiff/commands.hpp"
#include "resdiff/version.hpp"

using namespace resdiff;

int main(int argc, char** argv) {
    enable_fast_fp();
    CLI::App app{"observation-anchored residual diffusion for radar respiration waveforms"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "run configuration JSON (built-in defaults if omitted)")
        ->expected(1);
    app.add_option_function<std::uint64_t>(
           "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; }, "master seed override");

    auto* sim = app.add_subcommand("simulate", "generate the synthetic paired corpus");
    std::string sim_out;
    sim->add_option("--out", sim_out, "output directory (default: paths.data_dir)");

    auto* tr = app.add_subcommand("train", "train the denoiser on a simulated corpus");
    cmd::TrainOptions topt;
    tr->add_option("--data", topt.data_dir, "dataset directory (default: paths.data_dir)");
    tr->add_option("--out", topt.out_ckpt, "checkpoint path (default: paths.out_dir/model.ckpt)");
    tr->add_option("--ablation", topt.ablation, "none|v1|v2|v3|v4")
        ->check(CLI::IsMember({"none", "v1", "v2", "v3", "v4"}));
    tr->add_option("--epochs", topt.epochs_override, "override train.epochs");
    tr->add_option("--resume", topt.resume_path, "continue from an existing checkpoint");

    auto* rec = app.add_subcommand("reconstruct", "denoise segments from a CSV file");
    cmd::ReconstructOptions ropt;
    rec->add_option("--ckpt", ropt.ckpt_path, "trained checkpoint")->required();
    rec->add_option("--segments", ropt.segments_csv, "input segment CSV")->required();
    rec->add_option("--out", ropt.out_csv, "output CSV")->required();
    rec->add_option("--steps", ropt.steps_override, "reverse steps (default: checkpoint value)");
    rec->add_flag("--plot", ropt.plot, "emit per-segment SVG overlays");

    auto* ev = app.add_subcommand("evaluate", "report CS/MSE and rate metrics on the test split");
    cmd::EvaluateOptions eopt;
    ev->add_option("--ckpt", eopt.ckpt_path, "trained checkpoint (model mode)");
    ev->add_option("--data", eopt.data_dir, "dataset directory (default: paths.data_dir)");
    ev->add_option("--out", eopt.out_json, "metrics report JSON path");
    ev->add_option("--baseline", eopt.baseline, "evaluate a baseline instead (bpf)");
    ev->add_flag("--oracle", eopt.oracle, "oracle denoiser sanity mode");
    ev->add_option("--steps", eopt.steps_override, "reverse steps override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        config::RunConfig cfg =
            config_path.empty() ? config::default_config() : config::load_config(config_path);
        if (seed_set) {
            cfg.seed = seed;
            cfg.train.seed = seed;
            cfg.eval.seed = seed;
        }
        cfg.validate();

        if (sim->parsed()) {
            cmd::cmd_simulate(cfg, sim_out);
        } else if (tr->parsed()) {
            cmd::cmd_train(cfg, topt);
        } else if (rec->parsed()) {
            cmd::cmd_reconstruct(cfg, ropt);
        } else if (ev->parsed()) {
            cmd::cmd_evaluate(cfg, eopt);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    }
}
