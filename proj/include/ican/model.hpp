#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ican/coattention.hpp"
#include "ican/config.hpp"
#include "ican/dataset.hpp"
#include "ican/encoders.hpp"
#include "ican/fusion.hpp"
#include "ican/pricing.hpp"

namespace ican {

/// One of the compared architectures with its parameters, from the
/// attribute embedding to the ensemble heads.
class Model {
public:
    /// `visual_channels` is d_v for stored maps or the image channel count
    /// when the toy encoder is used.
    Model(const RunConfig& config, const AttributeSchema& schema, std::size_t visual_channels,
          const PriceZoneTable& table = PriceZoneTable::standard());

    struct Output {
        Tensor logits;  // [N_c x bins]
        std::optional<AttentionRecord> attention;
    };

    /// Visual input as stored in the dataset: a [d_v x D] map, or a
    /// [c x side x side] image for the toy encoder.
    Tensor visual_input(const Dataset& data, std::size_t index) const;
    /// Feature map h_v for a visual input.
    Tensor feature_map(const Tensor& input) const;

    Output forward(const Tensor& visual_input, const EncodedRecord& attributes) const;
    PredictionResult predict(const Tensor& visual_input, const EncodedRecord& attributes) const;

    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }
    const RunConfig& config() const { return config_; }
    const AttributeSchema& schema() const { return schema_; }
    const PriceZoneTable& zones() const { return table_; }
    const std::vector<CoarsePartition>& partitions() const { return partitions_; }

private:
    Tensor pooled_visual(const Tensor& h_v) const;
    Tensor widened_attributes(const Tensor& h_a) const;

    RunConfig config_;
    AttributeSchema schema_;
    PriceZoneTable table_;
    std::vector<CoarsePartition> partitions_;
    ParameterStore store_;

    std::unique_ptr<ToyConvEncoder> toy_;
    AttributeEmbedding embedding_;
    Tensor widen_w_, widen_b_;  // attributes [d_a*T] -> d_v
    Fusion fusion_;             // baselines
    std::optional<CoAttentionCellParams> cell_;
    EnsembleParams ensemble_;
};

/// Width of the vector fed to the ensemble for a variant.
std::size_t ensemble_input_width(const RunConfig& config);

}  // namespace ican
