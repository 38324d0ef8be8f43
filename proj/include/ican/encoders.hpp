#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ican/params.hpp"
#include "ican/tensor.hpp"

namespace ican {

enum class AttributeKind { continuous, categorical };

struct AttributeDescriptor {
    std::string name;
    AttributeKind kind = AttributeKind::continuous;
    std::size_t categories = 0;  // categorical only
    bool unknown_slot = false;   // adds one extra "unknown" category

    /// Length of the one-hot vector (categories plus the optional unknown slot).
    std::size_t one_hot_width() const { return categories + (unknown_slot ? 1 : 0); }
    /// Width of the first embedding layer, ceil(width / 2).
    std::size_t hidden_width() const { return (one_hot_width() + 1) / 2; }
};

struct AttributeSchema {
    std::vector<AttributeDescriptor> attributes;

    /// The 13 ring attributes: 4 continuous measurements followed by 9
    /// categorical fields (117 categories in total).
    static AttributeSchema ring_default(bool unknown_slot = false);

    /// Text form, one attribute per line: name,continuous or
    /// name,categorical,<count>[,unknown].
    static AttributeSchema parse(const std::string& text);
    std::string to_text() const;

    std::size_t size() const { return attributes.size(); }
    std::size_t index_of(const std::string& name) const;
    void validate() const;
};

/// Raw attribute cell: missing, a continuous measurement, or a category id.
using AttributeValue = std::variant<std::monostate, double, std::size_t>;

struct AttributeRecord {
    std::vector<AttributeValue> values;
};

struct ContinuousColumnStats {
    double raw_mean = 0.0;  // imputation value
    double log_mean = 0.0;
    double log_std = 1.0;
};

inline constexpr double kStdFloor = 1e-8;

/// Per-attribute statistics for continuous columns, fit on the training split.
struct ContinuousStats {
    std::vector<ContinuousColumnStats> columns;  // indexed by attribute; categorical entries unused

    static ContinuousStats fit(const std::vector<AttributeRecord>& train, const AttributeSchema& schema);
};

/// Missing -> training mean, then ln(1 + v), then (x - mean) / max(std, 1e-8).
double preprocess_continuous(std::optional<double> value, const ContinuousColumnStats& stats);

Tensor one_hot(const AttributeDescriptor& attr, std::size_t category_id);

/// Model-ready attributes: standardized scalars and one-hot slot indices.
struct EncodedRecord {
    std::vector<std::variant<double, std::size_t>> values;
};

/// Validates `record` against `schema` and applies preprocessing. Unknown
/// or missing categories map to the unknown slot when the schema has one.
EncodedRecord encode_record(const AttributeRecord& record, const AttributeSchema& schema,
                            const ContinuousStats& stats);

/// Two-layer per-attribute embedding. Categorical attributes pass a one-hot
/// vector through an affine map of width ceil(d/2) and then an affine map to
/// d_a; continuous attributes enter the second layer as scalars. Both layers
/// are affine (no activation).
class AttributeEmbedding {
public:
    AttributeEmbedding() = default;
    AttributeEmbedding(ParameterStore& store, const std::string& prefix, const AttributeSchema& schema,
                       std::size_t d_a, Rng& rng);

    /// Returns the attribute map [d_a x T], columns in schema order.
    Tensor embed(const EncodedRecord& record) const;

    std::size_t d_a() const { return d_a_; }
    std::size_t slots() const { return layers_.size(); }

    struct Layers {
        std::optional<Tensor> w1, b1;  // categorical only: [width x u], [u]
        Tensor w2, b2;                 // [u or 1 x d_a], [d_a]
        std::size_t width = 0;
    };
    const std::vector<Layers>& layers() const { return layers_; }

private:
    std::vector<Layers> layers_;
    std::size_t d_a_ = 0;
};

/// Binary per-split store of visual feature maps ("FMAP" format, little
/// endian): magic, version u32, count u32, d_v u32, D u32, then
/// count * d_v * D float32 values, channel-major within each sample.
struct FeatureStore {
    std::uint32_t d_v = 0;
    std::uint32_t positions = 0;
    std::vector<std::vector<float>> samples;

    std::size_t count() const { return samples.size(); }
    static FeatureStore read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;
};

/// Source of the visual representation h_v for a sample.
class FeatureMapProvider {
public:
    virtual ~FeatureMapProvider() = default;
    virtual Tensor provide(std::size_t sample_id) const = 0;
    virtual std::size_t channels() const = 0;
    virtual std::size_t positions() const = 0;
};

/// Serves precomputed maps from a FeatureStore after checking its shape
/// against the configured (d_v, D).
class StoredFeatureProvider : public FeatureMapProvider {
public:
    StoredFeatureProvider(const FeatureStore& store, std::size_t d_v, std::size_t positions);
    Tensor provide(std::size_t sample_id) const override;
    std::size_t channels() const override { return store_->d_v; }
    std::size_t positions() const override { return store_->positions; }

private:
    const FeatureStore* store_;
};

/// Small stride-2 convolution stack (conv + relu per stage) ending at d_v
/// channels, trained end to end as the stand-in visual backbone.
class ToyConvEncoder {
public:
    ToyConvEncoder() = default;
    /// `channels` lists input channels followed by each stage's output.
    ToyConvEncoder(ParameterStore& store, const std::string& prefix, std::vector<std::size_t> channels,
                   std::size_t kernel, Rng& rng);

    /// image [c x H x W] -> feature map [d_v x (H / 2^s) * (W / 2^s)].
    Tensor encode(const Tensor& image) const;

    std::size_t stages() const { return weights_.size(); }
    std::size_t output_channels() const { return channels_.back(); }
    std::size_t positions_for(std::size_t height, std::size_t width) const;

    // Exposed for tests that set kernels by hand.
    std::vector<Tensor>& weights() { return weights_; }
    std::vector<Tensor>& biases() { return biases_; }

private:
    std::vector<std::size_t> channels_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

/// Encodes square images stored as [c x side*side] records of a FeatureStore.
class ToyEncoderProvider : public FeatureMapProvider {
public:
    ToyEncoderProvider(const FeatureStore& images, const ToyConvEncoder& encoder);
    Tensor provide(std::size_t sample_id) const override;
    std::size_t channels() const override { return encoder_->output_channels(); }
    std::size_t positions() const override;

private:
    const FeatureStore* images_;
    const ToyConvEncoder* encoder_;
    std::size_t side_;
};

}  // namespace ican
