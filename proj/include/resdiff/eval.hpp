#ifndef RESDIFF_EVAL_HPP
#define RESDIFF_EVAL_HPP

#include <map>

#include "resdiff/bpf.hpp"
#include "resdiff/dataset.hpp"
#include "resdiff/diffusion.hpp"
#include "resdiff/metrics.hpp"
#include "resdiff/rdt.hpp"

namespace resdiff::eval {

// One full reverse chain for a single observation, reusing the conditioning
// tokens/projections and per-step modulation across steps (y and t do not
// change within a step, so observation anchoring keeps sampling cheap).
template <class S>
VecX<S> reconstruct(const rdt::RdtModel<S>& model, const VecX<S>& y,
                    const diffusion::RespacedSchedule& respaced, Rng& rng) {
    const auto cond = model.make_cond_cache(y);
    std::map<int, typename rdt::RdtModel<S>::StepCache> step_caches;
    diffusion::Denoiser<S> denoiser = [&](const VecX<S>& x_t, const VecX<S>&, int t) {
        auto it = step_caches.find(t);
        if (it == step_caches.end()) it = step_caches.emplace(t, model.make_step_cache(t)).first;
        return model.forward_cached(x_t, cond, it->second);
    };
    return diffusion::sample<S>(y, denoiser, respaced, rng);
}

enum class Mode { Model, Oracle, Bpf, RawY };

struct EvalOptions {
    int sample_steps = 20;
    double fs_hz = 20.0;
    double band_low_hz = 0.1;
    double band_high_hz = 0.7;
    std::uint64_t seed = 0;
    int n_threads = 1;
};

// Shared metric pathway for the model and the reference pipelines: CS/MSE on
// waveforms, MAE/RMSE/SD on periodogram rates. Deterministic given
// (model, test set, seed).
metrics::MetricsReport evaluate(const rdt::RdtModel<float>* model,
                                const diffusion::NoiseSchedule& sched, const data::Dataset& test,
                                Mode mode, const EvalOptions& opt);

} // namespace resdiff::eval

#endif
