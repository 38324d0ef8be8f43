#include "ican/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ican/ops.hpp"

namespace ican {

namespace {

bool uses_attributes(Variant v) { return v != Variant::visual_alone; }
bool uses_widening(Variant v) { return v != Variant::visual_alone && v != Variant::ican; }

}  // namespace

std::size_t ensemble_input_width(const RunConfig& config) {
    switch (config.variant) {
        case Variant::visual_alone:
        case Variant::attributes_alone:
        case Variant::add:
        case Variant::product: return config.model.d_v;
        case Variant::concat: return 2 * config.model.d_v;
        case Variant::mfb:
        case Variant::block:
        case Variant::ican: return config.model.o_pred;
    }
    return 0;
}

Model::Model(const RunConfig& config, const AttributeSchema& schema, std::size_t visual_channels,
             const PriceZoneTable& table)
    : config_(config), schema_(schema), table_(table) {
    config_.validate();
    schema_.validate();
    table_.validate();
    config_.model.slots = schema_.size();
    const auto& m = config_.model;
    partitions_ = build_coarse_partitions(config_.heads, config_.bins, config_.band, table_);

    Rng rng(config_.require_seed());
    if (config_.visual == VisualSource::toy) {
        std::vector<std::size_t> channels{visual_channels};
        channels.insert(channels.end(), config_.toy_channels.begin(), config_.toy_channels.end());
        if (channels.back() != m.d_v) {
            throw std::invalid_argument("toy encoder ends at " + std::to_string(channels.back()) +
                                        " channels but d_v is " + std::to_string(m.d_v));
        }
        toy_ = std::make_unique<ToyConvEncoder>(store_, "toy", channels, config_.toy_kernel, rng);
    } else if (visual_channels != m.d_v) {
        throw std::invalid_argument("feature maps have " + std::to_string(visual_channels) + " channels but d_v is " +
                                    std::to_string(m.d_v));
    }

    const Variant v = config_.variant;
    if (uses_attributes(v)) embedding_ = AttributeEmbedding(store_, "embed", schema_, m.d_a, rng);
    if (uses_widening(v)) {
        const std::size_t flat = m.d_a * m.slots;
        widen_w_ = store_.add_glorot("widen.w", {flat, m.d_v}, flat, m.d_v, rng);
        widen_b_ = store_.add_zeros("widen.b", {m.d_v});
    }
    switch (v) {
        case Variant::concat: fusion_.kind = FusionKind::concat; break;
        case Variant::add: fusion_.kind = FusionKind::add; break;
        case Variant::product: fusion_.kind = FusionKind::product; break;
        case Variant::mfb:
            fusion_.kind = FusionKind::mfb;
            fusion_.mfb = MfbParams::create(store_, "fusion.mfb", m.d_v, m.d_v, m.mfb_k, m.o_pred, rng);
            break;
        case Variant::block:
            fusion_.kind = FusionKind::block;
            fusion_.block = BlockParams::create(store_, "fusion.block", m.d_v, m.d_v, m.o_pred, m.block_l, m.block_m,
                                                m.block_n, m.block_r, rng);
            break;
        case Variant::ican: cell_ = CoAttentionCellParams::create(store_, "cell", m, rng); break;
        default: break;
    }
    ensemble_ = EnsembleParams::create(store_, "ensemble", ensemble_input_width(config_), config_.heads, config_.bins, rng);
}

Tensor Model::visual_input(const Dataset& data, std::size_t index) const {
    if (index >= data.visual.count()) throw std::out_of_range("no visual record " + std::to_string(index));
    const auto& s = data.visual.samples[index];
    std::vector<double> v(s.begin(), s.end());
    if (!data.images) return Tensor({data.visual.d_v, data.visual.positions}, std::move(v));
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(data.visual.positions))));
    if (side * side != data.visual.positions) throw std::invalid_argument("image records must be square");
    return Tensor({data.visual.d_v, side, side}, std::move(v));
}

Tensor Model::feature_map(const Tensor& input) const {
    const auto& m = config_.model;
    Tensor h = toy_ ? toy_->encode(input) : input;
    if (h.dim() != 2 || h.extent(0) != m.d_v || h.extent(1) != m.positions) {
        throw std::invalid_argument("feature map " + shape_str(h.shape()) + " does not match configured [" +
                                    std::to_string(m.d_v) + " x " + std::to_string(m.positions) + "]");
    }
    return h;
}

Tensor Model::pooled_visual(const Tensor& h_v) const {
    return scale(reduce_sum(h_v, 1), 1.0 / static_cast<double>(h_v.extent(1)));
}

Tensor Model::widened_attributes(const Tensor& h_a) const {
    const Tensor flat = reshape(h_a, {1, h_a.numel()});
    return reshape(add(matmul(flat, widen_w_), widen_b_), {widen_w_.extent(1)});
}

Model::Output Model::forward(const Tensor& visual, const EncodedRecord& attributes) const {
    const Tensor h_v = feature_map(visual);
    Output out;
    Tensor x;
    if (config_.variant == Variant::visual_alone) {
        x = pooled_visual(h_v);
    } else {
        const Tensor h_a = embedding_.embed(attributes);
        switch (config_.variant) {
            case Variant::attributes_alone: x = widened_attributes(h_a); break;
            case Variant::ican: {
                auto r = ican_forward(h_v, h_a, *cell_, config_.model.cells);
                x = r.h_bar;
                out.attention = std::move(r.attention);
                break;
            }
            default: x = fusion_.apply(pooled_visual(h_v), widened_attributes(h_a)); break;
        }
    }
    out.logits = ensemble_.logits(x);
    return out;
}

PredictionResult Model::predict(const Tensor& visual, const EncodedRecord& attributes) const {
    const Tensor probs = softmax(forward(visual, attributes).logits, 1);
    std::vector<std::vector<double>> coarse(config_.heads, std::vector<double>(config_.bins));
    for (std::size_t k = 0; k < config_.heads; ++k)
        for (std::size_t c = 0; c < config_.bins; ++c) coarse[k][c] = probs.at(k, c);
    return vote(coarse, partitions_, table_);
}

}  // namespace ican
