#ifndef RESDIFF_COMMANDS_HPP
#define RESDIFF_COMMANDS_HPP

#include <cstdint>
#include <string>

#include "resdiff/config.hpp"
#include "resdiff/dataset.hpp"
#include "resdiff/metrics.hpp"

namespace resdiff::cmd {

// Worker cap: RESDIFF_THREADS when set, otherwise hardware concurrency
// (at most 8).
int thread_count();

// Dataset written by `simulate`: per-scene cube files + segment CSVs and a
// manifest with per-scene seeds. Scene disjointness across roles is checked
// both at write and at load time.
void cmd_simulate(const config::RunConfig& cfg, const std::string& out_dir);

data::Dataset load_dataset(const std::string& data_dir, const std::string& role);

struct TrainOptions {
    std::string data_dir;
    std::string out_ckpt;
    std::string ablation = "none";
    int epochs_override = 0; // 0: config value
    std::string resume_path;
};
void cmd_train(const config::RunConfig& cfg, const TrainOptions& opt);

struct ReconstructOptions {
    std::string ckpt_path;
    std::string segments_csv;
    std::string out_csv;
    int steps_override = 0;
    bool plot = false;
};
void cmd_reconstruct(const config::RunConfig& cfg, const ReconstructOptions& opt);

struct EvaluateOptions {
    std::string ckpt_path;
    std::string data_dir;
    std::string out_json;
    std::string baseline; // "" or "bpf"
    bool oracle = false;
    int steps_override = 0;
};
metrics::MetricsReport cmd_evaluate(const config::RunConfig& cfg, const EvaluateOptions& opt);

} // namespace resdiff::cmd

#endif
