#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ican/coattention.hpp"
#include "ican/synthetic.hpp"
#include "ican/tensor.hpp"

namespace ican {

enum class Variant { visual_alone, attributes_alone, concat, add, product, mfb, block, ican };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);
const std::vector<Variant>& all_variants();

enum class VisualSource { stored, toy };

/// Everything a run needs. Serialized as flat key=value text; see
/// RunConfig::keys() for the full list.
struct RunConfig {
    Variant variant = Variant::ican;
    IcanConfig model;  // L and all dimensions

    std::size_t heads = 5;  // N_c
    std::size_t bins = 4;
    double band = 240.0;  // b, in dollars

    VisualSource visual = VisualSource::stored;
    std::vector<std::size_t> toy_channels{16, 64};  // per-stage output channels
    std::size_t toy_kernel = 2;

    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 40;
    std::size_t patience = 10;
    std::optional<std::uint64_t> seed;
    Precision precision = Precision::f64;

    std::string data_dir;
    std::string out_dir = "run";

    SyntheticSpec synthetic;

    struct Key {
        std::string name;
        std::string help;
    };
    static const std::vector<Key>& keys();

    /// Sets one key; `preset` expands to several keys (desk, full).
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;

    /// Parses key=value lines; '#' starts a comment.
    void apply_text(const std::string& text);
    void apply_file(const std::filesystem::path& path);
    static RunConfig from_text(const std::string& text);
    std::string to_text() const;

    /// Synthetic settings with the visual dims taken from the model.
    SyntheticSpec synthetic_spec() const;

    std::uint64_t require_seed() const;
    void validate() const;
};

}  // namespace ican
