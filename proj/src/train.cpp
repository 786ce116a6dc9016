#include "resdiff/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <thread>

namespace resdiff::train {

void split_scenes(const data::Dataset& ds, double val_fraction, std::vector<int>& train_idx,
                  std::vector<int>& val_idx) {
    auto scenes = ds.unique_scenes();
    if (scenes.size() < 2)
        throw DataError("train: need at least two scenes for a scene-disjoint split");
    const int n_val = std::max(1, static_cast<int>(std::floor(val_fraction * scenes.size())));
    std::set<int> val_scenes(scenes.end() - n_val, scenes.end());
    train_idx.clear();
    val_idx.clear();
    for (int i = 0; i < ds.size(); ++i) {
        if (val_scenes.count(ds.scene_ids[i]))
            val_idx.push_back(i);
        else
            train_idx.push_back(i);
    }
    if (train_idx.empty() || val_idx.empty())
        throw DataError("train: empty train or validation split");
}

namespace {

struct Shard {
    MatX<float> xt, y, target, out;
    std::vector<int> ts;
    rdt::RdtModel<float>::Workspace ws;
    VecX<float> grad;
    double loss = 0.0;
};

// Mean over the batch of the squared L2 distance between the prediction and
// the clean signal; gradients accumulate into shard.grad.
void run_shard(const rdt::RdtModel<float>& model, Shard& shard, bool backward) {
    const int b = static_cast<int>(shard.xt.rows());
    if (b == 0) {
        shard.loss = 0.0;
        return;
    }
    shard.out = model.forward_batch(shard.xt, shard.y, shard.ts, shard.ws);
    MatX<float> diff = shard.out - shard.target;
    shard.loss = static_cast<double>(diff.squaredNorm());
    if (backward) {
        MatX<float> dout = 2.0f * diff;
        model.backward_batch(dout, shard.ws, shard.grad);
    }
}

class BatchRunner {
  public:
    BatchRunner(const rdt::RdtModel<float>& model, int n_threads)
        : model_(model), shards_(std::max(1, n_threads)) {
        for (auto& s : shards_) s.grad = VecX<float>::Zero(model.params().size());
    }

    // Assemble per-shard slices of the batch rows listed in `rows`.
    template <class Draw>
    void assemble(const MatX<float>& y_all, const MatX<float>& x_all,
                  const std::vector<int>& rows, Draw&& draw) {
        const int b = static_cast<int>(rows.size());
        const int nt = static_cast<int>(shards_.size());
        const int chunk = (b + nt - 1) / nt;
        for (int s = 0; s < nt; ++s) {
            const int lo = std::min(b, s * chunk);
            const int hi = std::min(b, lo + chunk);
            Shard& sh = shards_[s];
            sh.xt.resize(hi - lo, y_all.cols());
            sh.y.resize(hi - lo, y_all.cols());
            sh.target.resize(hi - lo, y_all.cols());
            sh.ts.resize(hi - lo);
            for (int r = lo; r < hi; ++r) {
                const int i = rows[r];
                sh.y.row(r - lo) = y_all.row(i);
                sh.target.row(r - lo) = x_all.row(i);
                draw(i, x_all.row(i), y_all.row(i), sh.xt.row(r - lo), sh.ts[r - lo]);
            }
        }
    }

    // Returns the summed loss over all shards; gradients (if any) are summed
    // into `grad` in shard order, so results do not depend on thread timing.
    double run(bool backward, VecX<float>* grad) {
        for (auto& s : shards_) s.grad.setZero();
        if (shards_.size() == 1) {
            run_shard(model_, shards_[0], backward);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(shards_.size() - 1);
            for (std::size_t s = 1; s < shards_.size(); ++s)
                pool.emplace_back([this, s, backward] {
                    enable_fast_fp();
                    run_shard(model_, shards_[s], backward);
                });
            run_shard(model_, shards_[0], backward);
            for (auto& t : pool) t.join();
        }
        double loss = 0.0;
        for (auto& s : shards_) loss += s.loss;
        if (backward && grad)
            for (auto& s : shards_) *grad += s.grad;
        return loss;
    }

  private:
    const rdt::RdtModel<float>& model_;
    std::vector<Shard> shards_;
};

} // namespace

TrainResult train(rdt::RdtModel<float>& model, const data::Dataset& dataset,
                  const diffusion::NoiseSchedule& sched, const TrainConfig& cfg, int n_threads,
                  int start_epoch, const EpochCallback& on_epoch) {
    cfg.validate();
    enable_fast_fp();
    if (!dataset.has_truth()) throw DataError("train: dataset lacks ground truth");

    std::vector<int> train_idx, val_idx;
    split_scenes(dataset, cfg.val_fraction, train_idx, val_idx);

    MatX<float> y_all, x_all;
    data::to_matrices<float>(dataset, y_all, x_all);

    const Eigen::Index n_params = model.params().size();
    VecX<float> grad(n_params);
    VecX<float> m = VecX<float>::Zero(n_params);
    VecX<float> v = VecX<float>::Zero(n_params);

    PlateauScheduler scheduler(cfg.initial_lr, cfg.lr_reduce_factor, cfg.patience);
    BatchRunner runner(model, n_threads);

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    std::int64_t step = 0;

    // draws x_t for one sample: t uniform on {1..T}, x_t from the marginal
    auto make_draw = [&](Rng& rng) {
        return [&rng, &sched](int, const auto& x_row, const auto& y_row, auto&& xt_row, int& t) {
            t = 1 + static_cast<int>(rng.integer(static_cast<std::uint64_t>(sched.T)));
            const float e = static_cast<float>(sched.eta_at(t));
            const float sd = static_cast<float>(sched.kappa * std::sqrt(sched.eta_at(t)));
            for (Eigen::Index c = 0; c < x_row.size(); ++c) {
                float val = x_row[c] + e * (y_row[c] - x_row[c]);
                if (sd > 0.0f) val += sd * static_cast<float>(rng.normal());
                xt_row[c] = val;
            }
        };
    };

    for (int epoch = start_epoch; epoch < start_epoch + cfg.epochs; ++epoch) {
        // shuffle
        std::vector<int> order = train_idx;
        Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.integer(static_cast<std::uint64_t>(i + 1))]);

        Rng pair_rng = Rng::stream(cfg.seed, "pairs", static_cast<std::uint64_t>(epoch));
        auto draw = make_draw(pair_rng);

        double epoch_loss = 0.0;
        std::size_t n_seen = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), off + cfg.batch_size);
            std::vector<int> rows(order.begin() + off, order.begin() + hi);
            runner.assemble(y_all, x_all, rows, draw);
            grad.setZero();
            double batch_loss = runner.run(true, &grad);
            const float inv_b = 1.0f / static_cast<float>(rows.size());
            grad *= inv_b;
            epoch_loss += batch_loss;
            n_seen += rows.size();

            if (cfg.grad_clip > 0) {
                const double norm = static_cast<double>(grad.norm());
                if (norm > cfg.grad_clip) grad *= static_cast<float>(cfg.grad_clip / norm);
            }

            // AdamW update with decoupled weight decay
            ++step;
            const float lr = static_cast<float>(scheduler.lr());
            const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
            m = b1 * m + (1.0f - b1) * grad;
            v = (b2 * v.array() + (1.0f - b2) * grad.array().square()).matrix();
            const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step));
            const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step));
            auto& theta = model.params().flat();
            theta.array() -= lr * ((m.array() / bc1) /
                                       ((v.array() / bc2).sqrt() + 1e-8f) +
                                   static_cast<float>(cfg.weight_decay) * theta.array());
        }
        epoch_loss /= static_cast<double>(n_seen);
        if (!std::isfinite(epoch_loss))
            throw NumericError("training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));

        // validation loss with an epoch-keyed stream
        Rng val_rng = Rng::stream(cfg.seed, "val", static_cast<std::uint64_t>(epoch));
        auto val_draw = make_draw(val_rng);
        double val_loss = 0.0;
        for (std::size_t off = 0; off < val_idx.size(); off += cfg.batch_size) {
            const std::size_t hi = std::min(val_idx.size(), off + cfg.batch_size);
            std::vector<int> rows(val_idx.begin() + off, val_idx.begin() + hi);
            runner.assemble(y_all, x_all, rows, val_draw);
            val_loss += runner.run(false, nullptr);
        }
        val_loss /= static_cast<double>(val_idx.size());

        EpochStats stats{epoch, epoch_loss, val_loss, scheduler.lr()};
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.best_params = model.params().flat();
        }
        scheduler.step(val_loss);
    }

    result.steps = step;
    if (result.best_params.size() > 0) model.params().flat() = result.best_params;
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write " + path);
    std::fputs("epoch,train_loss,val_loss,lr\n", f);
    for (const auto& h : history)
        std::fprintf(f, "%d,%.9g,%.9g,%.9g\n", h.epoch, h.train_loss, h.val_loss, h.lr);
    std::fclose(f);
}

} // namespace resdiff::train
