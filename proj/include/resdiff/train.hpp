#ifndef RESDIFF_TRAIN_HPP
#define RESDIFF_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "resdiff/dataset.hpp"
#include "resdiff/diffusion.hpp"
#include "resdiff/metrics.hpp"
#include "resdiff/rdt.hpp"
#include "resdiff/rng.hpp"

namespace resdiff::train {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    double initial_lr = 0.01;
    double lr_reduce_factor = 0.5;
    int patience = 5;
    double weight_decay = 1e-4;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    int checkpoint_every = 0; // 0: keep best/final only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double val_fraction = 0.1; // scene-disjoint validation share

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (initial_lr <= 0) throw ConfigError("train: initial_lr must be > 0");
        if (lr_reduce_factor <= 0 || lr_reduce_factor >= 1)
            throw ConfigError("train: lr_reduce_factor must be in (0, 1)");
        if (patience < 0) throw ConfigError("train: patience must be >= 0");
        if (val_fraction <= 0 || val_fraction >= 1)
            throw ConfigError("train: val_fraction must be in (0, 1)");
    }
};

// Reduce-on-plateau: after patience+1 epochs without improving the best seen
// validation loss (relative threshold), multiply the LR by `factor`.
class PlateauScheduler {
  public:
    PlateauScheduler(double initial_lr, double factor, int patience, double rel_threshold = 1e-4)
        : lr_(initial_lr), factor_(factor), patience_(patience), threshold_(rel_threshold) {}

    double lr() const { return lr_; }

    // Feed one validation loss; returns true when the LR was just reduced.
    bool step(double val_loss) {
        if (val_loss < best_ * (1.0 - threshold_)) {
            best_ = val_loss;
            bad_ = 0;
            return false;
        }
        if (++bad_ >= patience_ + 1) {
            lr_ *= factor_;
            bad_ = 0;
            return true;
        }
        return false;
    }

  private:
    double lr_;
    double factor_;
    int patience_;
    double threshold_;
    int bad_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    VecX<float> best_params; // snapshot at the best validation loss
    std::int64_t steps = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Scene-disjoint train/validation split (last val_fraction of the scene ids
// becomes validation).
void split_scenes(const data::Dataset& ds, double val_fraction, std::vector<int>& train_idx,
                  std::vector<int>& val_idx);

// AdamW + ReduceLROnPlateau training of the MSE objective on training pairs
// drawn from the forward marginal. The model is left at the best-validation
// parameters on return.
TrainResult train(rdt::RdtModel<float>& model, const data::Dataset& dataset,
                  const diffusion::NoiseSchedule& sched, const TrainConfig& cfg,
                  int n_threads = 1, int start_epoch = 0, const EpochCallback& on_epoch = {});

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

} // namespace resdiff::train

#endif
