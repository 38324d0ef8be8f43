#include "ican/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ican/ops.hpp"

namespace ican {

void assign_parameters(ParameterStore& store, const std::vector<NamedArray>& arrays) {
    auto& params = store.all();
    if (arrays.size() != params.size()) {
        throw std::invalid_argument("expected " + std::to_string(params.size()) + " parameter arrays, got " +
                                    std::to_string(arrays.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& a = arrays[i];
        auto& p = params[i];
        if (a.name != p.name) throw std::invalid_argument("parameter " + std::to_string(i) + " is '" + a.name + "', expected '" + p.name + "'");
        if (a.shape != p.tensor.shape()) {
            throw std::invalid_argument("parameter '" + p.name + "' has shape " + shape_str(a.shape) + ", expected " +
                                        shape_str(p.tensor.shape()));
        }
        std::copy(a.values.begin(), a.values.end(), p.tensor.mutable_values().begin());
    }
}

std::vector<NamedArray> snapshot_parameters(const ParameterStore& store) {
    std::vector<NamedArray> out;
    out.reserve(store.all().size());
    for (const auto& p : store.all()) {
        const auto v = p.tensor.values();
        out.push_back({p.name, p.tensor.shape(), std::vector<double>(v.begin(), v.end())});
    }
    return out;
}

Trainer::Trainer(Model& model, const Dataset& data, ContinuousStats stats)
    : model_(model), data_(data), stats_(std::move(stats)) {
    data_.validate();
    encoded_ = encode_all(data_, stats_);
    for (const auto& p : model_.parameters().all()) velocity_.emplace_back(p.tensor.numel(), 0.0);
    if (data_.indices(Split::train).empty()) throw std::invalid_argument("training split is empty");
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
    auto order = data_.indices(Split::train);
    const auto seed = model_.config().require_seed();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), std::uint32_t{0x7a1e}};
    Rng rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

double Trainer::batch_gradient(const std::vector<std::size_t>& batch) {
    Tape tape;
    TapeGuard guard(&tape);
    PrecisionGuard precision(model_.config().precision);
    std::vector<Tensor> logits;
    std::vector<double> prices;
    logits.reserve(batch.size());
    for (auto i : batch) {
        logits.push_back(model_.forward(model_.visual_input(data_, i), encoded_[i]).logits);
        prices.push_back(data_.prices[i]);
    }
    const Tensor loss = weighted_ce_loss(stack(logits), prices, model_.partitions());
    model_.parameters().zero_grad();
    tape.backward(loss);
    return loss.item();
}

void Trainer::apply_update() {
    const auto& cfg = model_.config();
    auto& params = model_.parameters().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].tensor.mutable_values();
        const auto grad = params[i].tensor.grad();
        auto& vel = velocity_[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            vel[j] = cfg.momentum * vel[j] - cfg.learning_rate * grad[j];
            values[j] += vel[j];
        }
        if (cfg.precision == Precision::f32) {
            round_to_precision(values, Precision::f32);
            round_to_precision(vel, Precision::f32);
        }
    }
}

EpochRecord Trainer::run_epoch() {
    const auto& cfg = model_.config();
    const auto order = epoch_order(epoch_);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
        const double loss = batch_gradient(batch);
        if (!std::isfinite(loss)) {
            throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch_ + 1) + ", batch " +
                                     std::to_string(batches + 1));
        }
        apply_update();
        total += loss;
        ++batches;
    }

    EpochRecord rec;
    rec.epoch = ++epoch_;
    rec.train_loss = total / static_cast<double>(batches);

    const auto val = data_.indices(Split::validation);
    if (!val.empty()) {
        std::vector<PredictionResult> results;
        std::vector<std::size_t> labels;
        PrecisionGuard precision(cfg.precision);
        for (auto i : val) {
            results.push_back(model_.predict(model_.visual_input(data_, i), encoded_[i]));
            labels.push_back(data_.labels[i]);
        }
        rec.top3 = top_k_accuracy(results, labels, 3);
        rec.top5 = top_k_accuracy(results, labels, 5);
        rec.top7 = top_k_accuracy(results, labels, 7);
    }
    rec.improved = rec.top3 > best_top3_;
    if (rec.improved) {
        best_top3_ = rec.top3;
        best_epoch_ = rec.epoch;
        since_best_ = 0;
        best_ = snapshot_parameters(model_.parameters());
    } else {
        ++since_best_;
    }
    log_.push_back(rec);
    return rec;
}

bool Trainer::finished() const {
    const auto& cfg = model_.config();
    return epoch_ >= cfg.max_epochs || (epoch_ > 0 && since_best_ >= cfg.patience);
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.config = model_.config().to_text();
    c.schema = model_.schema().to_text();
    c.zones = model_.zones().to_csv();
    c.visual_channels = data_.visual.d_v;
    c.stats = stats_;
    c.epoch = epoch_;
    c.best_top3 = best_top3_;
    c.best_epoch = best_epoch_;
    c.since_best = since_best_;
    c.log = log_;
    c.parameters = snapshot_parameters(model_.parameters());
    c.velocity = c.parameters;
    for (std::size_t i = 0; i < velocity_.size(); ++i) c.velocity[i].values = velocity_[i];
    c.best_parameters = best_;
    return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
    assign_parameters(model_.parameters(), ckpt.parameters);
    if (ckpt.velocity.size() != velocity_.size()) throw std::invalid_argument("checkpoint velocity does not match the model");
    for (std::size_t i = 0; i < velocity_.size(); ++i) {
        if (ckpt.velocity[i].values.size() != velocity_[i].size()) {
            throw std::invalid_argument("checkpoint velocity for '" + ckpt.velocity[i].name + "' has the wrong size");
        }
        velocity_[i] = ckpt.velocity[i].values;
    }
    epoch_ = ckpt.epoch;
    best_top3_ = ckpt.best_top3;
    best_epoch_ = ckpt.best_epoch;
    since_best_ = ckpt.since_best;
    log_ = ckpt.log;
    best_ = ckpt.best_parameters;
}

void Trainer::load_best() {
    if (!best_.empty()) assign_parameters(model_.parameters(), best_);
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, bool best) {
    const auto config = RunConfig::from_text(ckpt.config);
    auto model = std::make_unique<Model>(config, AttributeSchema::parse(ckpt.schema), ckpt.visual_channels,
                                         PriceZoneTable::parse_csv(ckpt.zones));
    assign_parameters(model->parameters(), best && !ckpt.best_parameters.empty() ? ckpt.best_parameters : ckpt.parameters);
    return model;
}

namespace {

TrainResult drive(Trainer& trainer, const TrainOptions& options, std::size_t epoch_limit) {
    std::ofstream metrics;
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        metrics.open(options.out_dir / "metrics.log", std::ios::app);
        if (!metrics) throw std::runtime_error("cannot write " + (options.out_dir / "metrics.log").string());
    }
    while (!trainer.finished() && trainer.epoch() < epoch_limit) {
        const auto rec = trainer.run_epoch();
        if (!options.out_dir.empty()) {
            metrics << rec.to_line() << '\n';
            metrics.flush();
            const auto ckpt = trainer.checkpoint();
            save_checkpoint(ckpt, options.out_dir / "last.ckpt");
            if (rec.improved) save_checkpoint(ckpt, options.out_dir / "best.ckpt");
        }
        if (options.on_epoch) options.on_epoch(rec);
    }
    return {trainer.checkpoint(), trainer.log()};
}

std::size_t channels_of(const Dataset& data) { return data.visual.d_v; }

}  // namespace

TrainResult train_model(const RunConfig& config, const Dataset& data, const TrainOptions& options,
                        const PriceZoneTable& table) {
    Model model(config, data.schema, channels_of(data), table);
    Trainer trainer(model, data, fit_stats(data));
    return drive(trainer, options, config.max_epochs);
}

TrainResult resume_training(const Checkpoint& ckpt, const Dataset& data, const TrainOptions& options,
                            std::size_t extra_epochs) {
    Checkpoint start = ckpt;
    if (extra_epochs > 0) {
        auto config = RunConfig::from_text(ckpt.config);
        config.max_epochs = ckpt.epoch + extra_epochs;
        start.config = config.to_text();
    }
    auto model = model_from_checkpoint(start, false);
    Trainer trainer(*model, data, start.stats);
    trainer.restore(start);
    return drive(trainer, options, model->config().max_epochs);
}

}  // namespace ican
