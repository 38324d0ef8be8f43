#include "ican/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ican/ops.hpp"

namespace ican {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double parse_bound(const std::string& s) {
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return v;
}

std::string format_bound(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::size_t bin_of(double price, const std::vector<double>& edges) {
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), price) - edges.begin());
}

}  // namespace

PriceZoneTable PriceZoneTable::standard() {
    PriceZoneTable t;
    t.zones.push_back({0, 157.0, -kInf, 180.0});
    for (std::size_t k = 1; k <= 16; ++k) {
        const double lower = 135.0 + 45.0 * static_cast<double>(k);
        t.zones.push_back({k, lower + 22.0, lower, lower + 45.0});
    }
    t.zones.push_back({17, 904.0, 900.0, kInf});
    return t;
}

PriceZoneTable PriceZoneTable::parse_csv(const std::string& text) {
    PriceZoneTable t;
    std::istringstream is(text);
    std::string line;
    bool header = true;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("label", 0) == 0) continue;
        }
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        require(f.size() == 4, "price zone line " + std::to_string(lineno) + ": expected 4 fields");
        try {
            t.zones.push_back({static_cast<std::size_t>(std::stoul(f[0])), parse_bound(f[1]), parse_bound(f[2]),
                               parse_bound(f[3])});
        } catch (const std::logic_error& e) {
            throw std::invalid_argument("price zone line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    t.validate();
    return t;
}

PriceZoneTable PriceZoneTable::load_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open price zone table " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return parse_csv(os.str());
}

std::string PriceZoneTable::to_csv() const {
    std::ostringstream os;
    os << "label,price_line,lower,upper\n";
    for (const auto& z : zones) {
        os << z.label << ',' << format_bound(z.price_line) << ',' << format_bound(z.lower) << ','
           << format_bound(z.upper) << '\n';
    }
    return os.str();
}

void PriceZoneTable::validate() const {
    require(zones.size() >= 2, "price zone table needs at least 2 zones");
    require(std::isinf(zones.front().lower) && zones.front().lower < 0, "first price zone must be open below");
    require(std::isinf(zones.back().upper) && zones.back().upper > 0, "last price zone must be open above");
    for (std::size_t i = 0; i < zones.size(); ++i) {
        const auto& z = zones[i];
        require(z.label == i, "price zone labels must be 0..n-1 in order");
        require(z.lower < z.upper, "price zone " + std::to_string(i) + " is empty");
        require(z.price_line >= z.lower && z.price_line < z.upper,
                "price line of zone " + std::to_string(i) + " lies outside its zone");
        if (i > 0) require(zones[i - 1].upper == z.lower, "price zones " + std::to_string(i - 1) + " and " +
                                                              std::to_string(i) + " are not contiguous");
    }
}

std::size_t price_to_label(double price, const PriceZoneTable& table) {
    require(price > 0.0 && std::isfinite(price), "price must be positive and finite, got " + std::to_string(price));
    for (const auto& z : table.zones) {
        if (price >= z.lower && price < z.upper) return z.label;
    }
    throw std::logic_error("price zone table does not cover " + std::to_string(price));
}

CoarsePartition CoarsePartition::from_edges(std::vector<double> edges, std::size_t index, double offset) {
    require(!edges.empty(), "coarse partition needs at least one interior edge");
    require(std::is_sorted(edges.begin(), edges.end()) &&
                std::adjacent_find(edges.begin(), edges.end()) == edges.end(),
            "coarse partition edges must be strictly increasing");
    return CoarsePartition{index, offset, std::move(edges)};
}

std::vector<CoarsePartition> build_coarse_partitions(std::size_t n_c, std::size_t bins, double band,
                                                     const PriceZoneTable& table) {
    require(n_c >= 1, "ensemble needs at least one classifier");
    require(bins >= 2, "coarse partitions need at least 2 bins");
    require(bins < table.size(), "coarse bins (" + std::to_string(bins) + ") must be fewer than the " +
                                     std::to_string(table.size()) + " fine labels");
    require(band > 0.0, "shifting band must be positive");
    std::vector<CoarsePartition> out;
    for (std::size_t k = 0; k < n_c; ++k) {
        const double offset = static_cast<double>(k) * band / static_cast<double>(n_c) - band / 2.0;
        std::vector<double> edges;
        for (std::size_t m = 1; m < bins; ++m) edges.push_back(offset + static_cast<double>(m) * band);
        out.push_back(CoarsePartition::from_edges(std::move(edges), k, offset));
    }
    return out;
}

std::size_t coarse_label(double price, const CoarsePartition& partition) { return bin_of(price, partition.edges); }

std::vector<std::vector<std::size_t>> voting_map(const std::vector<CoarsePartition>& partitions,
                                                 const PriceZoneTable& table) {
    std::vector<std::vector<std::size_t>> map;
    for (const auto& p : partitions) {
        std::vector<std::size_t> row;
        for (const auto& z : table.zones) row.push_back(coarse_label(z.price_line, p));
        map.push_back(std::move(row));
    }
    return map;
}

EnsembleParams EnsembleParams::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                                      std::size_t heads, std::size_t bins, Rng& rng) {
    require(heads >= 1 && bins >= 2, "ensemble needs >= 1 head and >= 2 bins");
    EnsembleParams p;
    p.heads = heads;
    p.bins = bins;
    // Each head is its own affine map; fan-out counted per head.
    p.weight = store.add_glorot(prefix + ".weight", {in, heads * bins}, in, bins, rng);
    p.bias = store.add_zeros(prefix + ".bias", {heads * bins});
    return p;
}

Tensor EnsembleParams::logits(const Tensor& h) const {
    const std::size_t in = weight.extent(0);
    if (h.dim() == 1) {
        require(h.numel() == in, "ensemble: input " + shape_str(h.shape()) + " does not match width " + std::to_string(in));
        return reshape(add(matmul(reshape(h, {1, in}), weight), bias), {heads, bins});
    }
    require(h.dim() == 2 && h.extent(1) == in,
            "ensemble: input " + shape_str(h.shape()) + " does not match width " + std::to_string(in));
    return reshape(add(matmul(h, weight), bias), {h.extent(0), heads, bins});
}

std::vector<std::size_t> rank_labels(const std::vector<double>& distribution) {
    std::vector<std::size_t> order(distribution.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return distribution[a] > distribution[b]; });
    return order;
}

PredictionResult vote(const std::vector<std::vector<double>>& coarse, const std::vector<CoarsePartition>& partitions,
                      const PriceZoneTable& table) {
    require(coarse.size() == partitions.size() && !coarse.empty(),
            "vote: " + std::to_string(coarse.size()) + " head outputs for " + std::to_string(partitions.size()) +
                " partitions");
    const auto map = voting_map(partitions, table);
    const std::size_t labels = table.size();
    std::vector<double> score(labels, 0.0);
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        require(coarse[k].size() == partitions[k].bins(), "vote: head " + std::to_string(k) + " has wrong bin count");
        for (std::size_t l = 0; l < labels; ++l) score[l] += coarse[k][map[k][l]];
    }
    const double n_c = static_cast<double>(coarse.size());
    double mx = -kInf;
    for (auto& s : score) mx = std::max(mx, s /= n_c);
    double total = 0.0;
    for (auto& s : score) total += (s = std::exp(s - mx));
    for (auto& s : score) s /= total;

    PredictionResult r;
    r.ranking = rank_labels(score);
    r.distribution = std::move(score);
    r.coarse = coarse;
    return r;
}

PredictionResult ensemble_forward(const Tensor& h_bar, const EnsembleParams& params,
                                  const std::vector<CoarsePartition>& partitions, const PriceZoneTable& table) {
    require(partitions.size() == params.heads, "ensemble_forward: partition count does not match heads");
    const Tensor probs = softmax(params.logits(h_bar), 1);
    std::vector<std::vector<double>> coarse(params.heads, std::vector<double>(params.bins));
    for (std::size_t k = 0; k < params.heads; ++k)
        for (std::size_t c = 0; c < params.bins; ++c) coarse[k][c] = probs.at(k, c);
    return vote(coarse, partitions, table);
}

std::vector<std::vector<std::size_t>> coarse_targets(const std::vector<double>& prices,
                                                     const std::vector<CoarsePartition>& partitions) {
    std::vector<std::vector<std::size_t>> t;
    t.reserve(prices.size());
    for (double p : prices) {
        std::vector<std::size_t> row;
        for (const auto& part : partitions) row.push_back(coarse_label(p, part));
        t.push_back(std::move(row));
    }
    return t;
}

Tensor weighted_ce_loss(const Tensor& logits, const std::vector<std::vector<std::size_t>>& targets) {
    require(!targets.empty(), "weighted_ce_loss: empty batch");
    require(logits.dim() == 3 && logits.extent(0) == targets.size(),
            "weighted_ce_loss: logits " + shape_str(logits.shape()) + " do not match batch of " +
                std::to_string(targets.size()));
    const std::size_t batch = logits.extent(0), heads = logits.extent(1), bins = logits.extent(2);

    std::vector<std::vector<std::size_t>> counts(heads, std::vector<std::size_t>(bins, 0));
    for (const auto& row : targets) {
        require(row.size() == heads, "weighted_ce_loss: target row has wrong head count");
        for (std::size_t k = 0; k < heads; ++k) {
            require(row[k] < bins, "weighted_ce_loss: coarse target out of range");
            ++counts[k][row[k]];
        }
    }
    const double scale_factor = -1.0 / (static_cast<double>(heads) * static_cast<double>(batch));
    std::vector<double> mask(batch * heads * bins, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k < heads; ++k) {
            const std::size_t c = targets[b][k];
            mask[(b * heads + k) * bins + c] =
                scale_factor * static_cast<double>(batch) / static_cast<double>(counts[k][c]);
        }
    return sum(mul(log_softmax(logits, 2), Tensor(logits.shape(), std::move(mask))));
}

Tensor weighted_ce_loss(const Tensor& logits, const std::vector<double>& prices,
                        const std::vector<CoarsePartition>& partitions) {
    return weighted_ce_loss(logits, coarse_targets(prices, partitions));
}

double top_k_accuracy(const std::vector<PredictionResult>& results, const std::vector<std::size_t>& labels,
                      std::size_t k) {
    require(results.size() == labels.size(), "top_k_accuracy: result and label counts differ");
    require(!results.empty(), "top_k_accuracy: no samples");
    const std::size_t classes = results.front().ranking.size();
    require(k >= 1 && k <= classes, "top_k_accuracy: k must be in [1, " + std::to_string(classes) + "]");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i].ranking;
        if (std::find(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), labels[i]) !=
            r.begin() + static_cast<std::ptrdiff_t>(k))
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<PredictionResult>& results,
                                                       const std::vector<std::size_t>& labels, std::size_t classes) {
    require(results.size() == labels.size(), "confusion_matrix: result and label counts differ");
    std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < results.size(); ++i) {
        require(labels[i] < classes && results[i].top() < classes, "confusion_matrix: label out of range");
        ++m[labels[i]][results[i].top()];
    }
    return m;
}

}  // namespace ican
