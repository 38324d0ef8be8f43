#pragma once

#include <cstddef>
#include <cstdint>

#include "ican/dataset.hpp"

namespace ican {

/// Planted pricing rule on normalized inputs w, s, v in [0, 1]:
///   price = base + beta_weight*w + beta_center*s + beta_visual*v
///           + beta_interaction*w*v + noise
/// where w is the normalized weight, s the normalized center stone size
/// and v the visual latent. Prices are clipped to at least `min_price`.
struct PriceRule {
    double base = 150.0;
    double beta_weight = 250.0;
    double beta_center = 250.0;
    double beta_visual = 250.0;
    double beta_interaction = 0.0;
    double noise = 10.0;
    double min_price = 1.0;

    double operator()(double w, double s, double v) const {
        return base + beta_weight * w + beta_center * s + beta_visual * v + beta_interaction * w * v;
    }
};

struct SyntheticSpec {
    std::size_t samples = 6800;
    bool unknown_slot = false;
    double missing_rate = 0.05;  // continuous cells left empty

    // Visual input. Feature maps are [d_v x D]; images are [channels x side^2].
    bool images = false;
    std::size_t d_v = 64;
    std::size_t positions = 16;
    std::size_t image_channels = 3;
    std::size_t image_side = 16;

    // One marker patch carries the latent. Optional decoys share the
    // intensity direction but carry a different signature.
    std::size_t decoys = 0;
    double patch_amplitude = 2.0;
    double feature_noise = 0.1;

    PriceRule rule;
    double train_fraction = 0.59;
    double validation_fraction = 0.165;
};

/// Ranges of the raw measurements used by the generator.
inline constexpr double kWeightMin = 0.05, kWeightMax = 0.5;  // ounces
inline constexpr double kCenterMax = 2.0;                      // carats

double normalized_weight(double weight);
double normalized_center(double center);

Dataset generate_synthetic(const SyntheticSpec& spec, const PriceZoneTable& table, std::uint64_t seed);

}  // namespace ican
