#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ican/encoders.hpp"
#include "ican/tensor.hpp"

namespace ican {

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double top3 = 0.0, top5 = 0.0, top7 = 0.0;  // validation
    bool improved = false;

    /// "epoch=3 loss=... val_top3=... val_top5=... val_top7=... best=1"
    std::string to_line() const;
};

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

/// Everything needed to rebuild a model and resume training bitwise.
struct Checkpoint {
    std::string config;  // RunConfig text
    std::string schema;  // AttributeSchema text
    std::string zones;   // PriceZoneTable CSV
    std::size_t visual_channels = 0;
    ContinuousStats stats;

    std::size_t epoch = 0;  // completed epochs
    double best_top3 = -1.0;
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
    std::vector<EpochRecord> log;

    std::vector<NamedArray> parameters;
    std::vector<NamedArray> velocity;         // same order as parameters
    std::vector<NamedArray> best_parameters;  // empty until the first validation

    std::vector<unsigned char> serialize() const;
    static Checkpoint deserialize(const std::vector<unsigned char>& bytes);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ican
