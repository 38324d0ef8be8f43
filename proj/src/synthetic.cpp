#include "ican/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ican {

namespace {

std::vector<double> unit_direction(std::size_t n, Rng& rng) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    double norm = 0.0;
    for (auto& x : v) {
        x = g(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

// Distinct positions for the marker (first) and the decoys.
std::vector<std::size_t> pick_positions(std::size_t count, std::size_t positions, Rng& rng) {
    std::vector<std::size_t> all(positions);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, positions - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    all.resize(count);
    return all;
}

}  // namespace

double normalized_weight(double weight) { return (weight - kWeightMin) / (kWeightMax - kWeightMin); }
double normalized_center(double center) { return center / kCenterMax; }

Dataset generate_synthetic(const SyntheticSpec& spec, const PriceZoneTable& table, std::uint64_t seed) {
    if (spec.samples == 0) throw std::invalid_argument("synthetic: sample count must be positive");
    const std::size_t slots = spec.images ? (spec.image_side / 2) * (spec.image_side / 2) : spec.positions;
    if (spec.decoys + 1 > slots) throw std::invalid_argument("synthetic: too many decoys for the available positions");
    if (spec.images && (spec.image_channels < 3 || spec.image_side % 2 != 0)) {
        throw std::invalid_argument("synthetic: images need >= 3 channels and an even side");
    }
    if (!spec.images && spec.d_v < 2) throw std::invalid_argument("synthetic: d_v must be >= 2");

    Rng rng(seed);
    Dataset data;
    data.schema = AttributeSchema::ring_default(spec.unknown_slot);
    data.images = spec.images;

    // Dataset-wide signatures in feature-map mode.
    const auto marker = unit_direction(spec.d_v, rng);
    const auto decoy = unit_direction(spec.d_v, rng);
    const auto intensity = unit_direction(spec.d_v, rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss;
    const std::size_t width = spec.images ? spec.image_side * spec.image_side : spec.positions;
    data.visual.d_v = static_cast<std::uint32_t>(spec.images ? spec.image_channels : spec.d_v);
    data.visual.positions = static_cast<std::uint32_t>(width);

    for (std::size_t n = 0; n < spec.samples; ++n) {
        const double size = 4.0 + 6.0 * unit(rng);
        const double weight = kWeightMin + (kWeightMax - kWeightMin) * unit(rng);
        const double center = kCenterMax * unit(rng);
        const double side = unit(rng);
        const double v = unit(rng);

        AttributeRecord rec;
        for (double x : {size, weight, center, side}) {
            if (unit(rng) < spec.missing_rate) rec.values.emplace_back(std::monostate{});
            else rec.values.emplace_back(x);
        }
        for (std::size_t t = 4; t < data.schema.size(); ++t) {
            std::uniform_int_distribution<std::size_t> cat(0, data.schema.attributes[t].categories - 1);
            rec.values.emplace_back(cat(rng));
        }

        double price = spec.rule(normalized_weight(weight), normalized_center(center), v) + spec.rule.noise * gauss(rng);
        price = std::max(price, spec.rule.min_price);

        const auto where = pick_positions(spec.decoys + 1, slots, rng);
        std::vector<float> map(static_cast<std::size_t>(data.visual.d_v) * width);
        for (auto& x : map) x = static_cast<float>(spec.feature_noise * gauss(rng));
        const double amp = spec.patch_amplitude;
        for (std::size_t p = 0; p < where.size(); ++p) {
            const bool is_marker = p == 0;
            const double level = is_marker ? v : unit(rng);
            if (spec.images) {
                // 2x2 block: tag channel 0 (marker) or 1 (decoy), intensity in channel 2.
                const std::size_t half = spec.image_side / 2;
                const std::size_t r0 = 2 * (where[p] / half), c0 = 2 * (where[p] % half);
                for (std::size_t dr = 0; dr < 2; ++dr)
                    for (std::size_t dc = 0; dc < 2; ++dc) {
                        const std::size_t pix = (r0 + dr) * spec.image_side + c0 + dc;
                        map[(is_marker ? 0 : 1) * width + pix] += static_cast<float>(amp);
                        map[2 * width + pix] += static_cast<float>(amp * level);
                    }
            } else {
                const auto& sig = is_marker ? marker : decoy;
                for (std::size_t c = 0; c < spec.d_v; ++c) {
                    map[c * width + where[p]] += static_cast<float>(amp * (sig[c] + level * intensity[c]));
                }
            }
        }

        data.records.push_back(std::move(rec));
        data.prices.push_back(price);
        data.labels.push_back(price_to_label(price, table));
        data.latent.push_back(v);
        data.visual.samples.push_back(std::move(map));
    }
    data.splits.assign(spec.samples, Split::train);
    assign_splits(data, spec.train_fraction, spec.validation_fraction, seed ^ 0x5eedULL);
    data.validate();
    return data;
}

}  // namespace ican
