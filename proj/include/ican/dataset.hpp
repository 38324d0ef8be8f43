#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ican/encoders.hpp"
#include "ican/pricing.hpp"

namespace ican {

enum class Split { train, validation, test };

const char* to_string(Split s);
Split parse_split(const std::string& s);

/// Aligned attribute records, prices and visual inputs. `visual` holds
/// feature maps [d_v x D] or, when `images` is set, square images
/// [c x side*side] for the toy encoder.
struct Dataset {
    AttributeSchema schema;
    std::vector<AttributeRecord> records;
    std::vector<double> prices;
    std::vector<std::size_t> labels;
    std::vector<Split> splits;
    FeatureStore visual;
    bool images = false;
    std::vector<double> latent;  // planted visual latent, synthetic data only

    std::size_t size() const { return records.size(); }
    std::vector<std::size_t> indices(Split s) const;
    void validate() const;
};

/// CSV layout: header of schema attribute names plus a `price` column and
/// optional `split` (train/validation/test) and `latent` columns. Empty
/// cell = missing. Categorical cells hold integer category ids.
Dataset load_dataset(const std::filesystem::path& attributes_csv, const std::filesystem::path& visual_store,
                     const AttributeSchema& schema, const PriceZoneTable& table, bool images = false);

void write_attributes_csv(const Dataset& data, const std::filesystem::path& path);

/// Assigns splits by shuffled index with the given train/validation fractions.
void assign_splits(Dataset& data, double train_fraction, double validation_fraction, std::uint64_t seed);

/// Fits continuous statistics on the training split only.
ContinuousStats fit_stats(const Dataset& data);

/// Encodes every record with frozen statistics.
std::vector<EncodedRecord> encode_all(const Dataset& data, const ContinuousStats& stats);

/// Data directory layout used by the CLI.
struct DataPaths {
    std::filesystem::path attributes, visual, schema, zones, meta;
    static DataPaths in(const std::filesystem::path& dir);
};

void save_dataset(const Dataset& data, const PriceZoneTable& table, const std::filesystem::path& dir);
Dataset load_dataset_dir(const std::filesystem::path& dir);

}  // namespace ican
