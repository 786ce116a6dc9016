#include "resdiff/eval.hpp"

#include <exception>
#include <mutex>
#include <thread>

namespace resdiff::eval {

metrics::MetricsReport evaluate(const rdt::RdtModel<float>* model,
                                const diffusion::NoiseSchedule& sched, const data::Dataset& test,
                                Mode mode, const EvalOptions& opt) {
    if (!test.has_truth()) throw DataError("evaluate: test set lacks ground truth");
    if (mode == Mode::Model && !model) throw ConfigError("evaluate: model required");

    const int n = test.size();
    std::vector<double> cs(n), mse(n), rate_pred(n), rate_true(n);

    diffusion::RespacedSchedule respaced;
    if (mode == Mode::Model) respaced = diffusion::RespacedSchedule::make(sched, opt.sample_steps);

    // the oracle runs the degenerate (kappa = 0) chain in double precision
    diffusion::NoiseSchedule oracle_sched = sched;
    oracle_sched.kappa = 0.0;
    diffusion::RespacedSchedule oracle_respaced;
    if (mode == Mode::Oracle)
        oracle_respaced = diffusion::RespacedSchedule::make(oracle_sched, opt.sample_steps);

    std::exception_ptr first_error;
    std::mutex err_mutex;

    auto worker = [&](int begin, int stride) {
        enable_fast_fp();
        try {
            for (int i = begin; i < n; i += stride) {
                const auto& seg = test.segments[i];
                Vec xhat;
                switch (mode) {
                    case Mode::Model: {
                        Rng rng = Rng::stream(opt.seed, "eval", static_cast<std::uint64_t>(i));
                        VecX<float> yf = seg.y.cast<float>();
                        xhat = reconstruct<float>(*model, yf, respaced, rng).cast<double>();
                        break;
                    }
                    case Mode::Oracle: {
                        Rng rng = Rng::stream(opt.seed, "eval", static_cast<std::uint64_t>(i));
                        const Vec& truth = seg.x;
                        diffusion::Denoiser<double> oracle =
                            [&truth](const Vec&, const Vec&, int) { return truth; };
                        xhat = diffusion::sample<double>(seg.y, oracle, oracle_respaced, rng);
                        break;
                    }
                    case Mode::Bpf:
                        xhat = bpf::bpf_baseline(seg.y, opt.fs_hz, opt.band_low_hz,
                                                 opt.band_high_hz);
                        break;
                    case Mode::RawY:
                        xhat = seg.y;
                        break;
                }
                cs[i] = metrics::cosine_similarity(xhat, seg.x);
                mse[i] = metrics::mse(xhat, seg.x);
                rate_pred[i] =
                    metrics::estimate_rate(xhat, opt.fs_hz, opt.band_low_hz, opt.band_high_hz);
                rate_true[i] =
                    metrics::estimate_rate(seg.x, opt.fs_hz, opt.band_low_hz, opt.band_high_hz);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    const int nt = std::max(1, opt.n_threads);
    if (nt == 1 || n <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker, t, nt);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    metrics::MetricsReport rep;
    rep.n_segments = n;
    for (int i = 0; i < n; ++i) {
        rep.cs += cs[i];
        rep.mse += mse[i];
    }
    rep.cs /= n;
    rep.mse /= n;
    auto rates = metrics::rate_metrics(rate_pred, rate_true);
    rep.mae_bpm = rates.mae;
    rep.rmse_bpm = rates.rmse;
    rep.sd_bpm = rates.sd;
    return rep;
}

} // namespace resdiff::eval
