#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "ican/checkpoint.hpp"
#include "ican/dataset.hpp"
#include "ican/model.hpp"

namespace ican {

/// Replaces the values of every parameter in `store` by name; names,
/// order and shapes must match exactly.
void assign_parameters(ParameterStore& store, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> snapshot_parameters(const ParameterStore& store);

/// Momentum SGD (v <- mu*v - lr*g, theta <- theta + v) over shuffled
/// mini-batches with validation top-3 early stopping.
class Trainer {
public:
    Trainer(Model& model, const Dataset& data, ContinuousStats stats);

    /// One pass over the training split followed by validation.
    EpochRecord run_epoch();
    bool finished() const;

    /// Mean weighted loss of one batch; fills parameter gradients.
    double batch_gradient(const std::vector<std::size_t>& batch);
    void apply_update();

    Checkpoint checkpoint() const;
    void restore(const Checkpoint& ckpt);
    /// Copies the parameters of the best validation epoch into the model.
    void load_best();

    const std::vector<EpochRecord>& log() const { return log_; }
    const std::vector<EncodedRecord>& encoded() const { return encoded_; }
    const ContinuousStats& stats() const { return stats_; }
    std::size_t epoch() const { return epoch_; }
    double best_top3() const { return best_top3_; }

private:
    std::vector<std::size_t> epoch_order(std::size_t epoch) const;

    Model& model_;
    const Dataset& data_;
    ContinuousStats stats_;
    std::vector<EncodedRecord> encoded_;
    std::vector<std::vector<double>> velocity_;

    std::size_t epoch_ = 0;
    double best_top3_ = -1.0;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    std::vector<EpochRecord> log_;
    std::vector<NamedArray> best_;
};

/// Rebuilds the model stored in a checkpoint, with the best parameters
/// when `best` is set and they exist.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, bool best = true);

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: keep everything in memory
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    Checkpoint final_state;  // after the last epoch, with best parameters recorded
    std::vector<EpochRecord> log;
};

/// Trains a fresh model of `config` on `data` until early stopping. Writes
/// last.ckpt, best.ckpt and metrics.log into out_dir when it is set.
TrainResult train_model(const RunConfig& config, const Dataset& data, const TrainOptions& options = {},
                        const PriceZoneTable& table = PriceZoneTable::standard());

/// Continues training from a checkpoint until early stopping or max_epochs.
/// A nonzero `extra_epochs` resets max_epochs to completed + extra_epochs.
TrainResult resume_training(const Checkpoint& ckpt, const Dataset& data, const TrainOptions& options = {},
                            std::size_t extra_epochs = 0);

}  // namespace ican
