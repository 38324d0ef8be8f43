#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ican/params.hpp"
#include "ican/tensor.hpp"

namespace ican {

struct PriceZone {
    std::size_t label = 0;
    double price_line = 0.0;
    double lower = 0.0;  // inclusive; -inf for the first zone
    double upper = 0.0;  // exclusive; +inf for the last zone
};

/// Fine price zones used as class labels. Zones are contiguous, ordered and
/// lower-inclusive/upper-exclusive.
struct PriceZoneTable {
    std::vector<PriceZone> zones;

    /// The 18-zone default: 157 below 180, 45-dollar zones from 180 to 900, 904 above.
    static PriceZoneTable standard();
    /// CSV with header label,price_line,lower,upper; "inf"/"-inf" for open ends.
    static PriceZoneTable parse_csv(const std::string& text);
    static PriceZoneTable load_csv(const std::filesystem::path& path);
    std::string to_csv() const;

    std::size_t size() const { return zones.size(); }
    void validate() const;
};

/// Zone containing `price` (price > 0).
std::size_t price_to_label(double price, const PriceZoneTable& table);

/// One classifier's coarse bins, given by ascending interior edges. Bin j
/// covers [edge[j-1], edge[j]) with open extremes.
struct CoarsePartition {
    std::size_t index = 0;
    double offset = 0.0;
    std::vector<double> edges;

    std::size_t bins() const { return edges.size() + 1; }
    static CoarsePartition from_edges(std::vector<double> edges, std::size_t index = 0, double offset = 0.0);
};

/// Classifier k gets offset d_k = k*band/n_c - band/2 and interior edges
/// d_k + m*band for m = 1..bins-1.
std::vector<CoarsePartition> build_coarse_partitions(std::size_t n_c, std::size_t bins, double band,
                                                     const PriceZoneTable& table);

std::size_t coarse_label(double price, const CoarsePartition& partition);

/// Per-classifier bin holding each fine label's price line: [k][label].
std::vector<std::vector<std::size_t>> voting_map(const std::vector<CoarsePartition>& partitions,
                                                 const PriceZoneTable& table);

/// N_c affine heads stored side by side: columns [k*bins, (k+1)*bins) belong to head k.
struct EnsembleParams {
    Tensor weight;  // [in x N_c*bins]
    Tensor bias;    // [N_c*bins]
    std::size_t heads = 1;
    std::size_t bins = 2;

    static EnsembleParams create(ParameterStore& store, const std::string& prefix, std::size_t in,
                                 std::size_t heads, std::size_t bins, Rng& rng);

    /// h [in] -> [N_c x bins], or h [B x in] -> [B x N_c x bins].
    Tensor logits(const Tensor& h) const;
};

struct PredictionResult {
    std::vector<double> distribution;          // over fine labels, sums to 1
    std::vector<std::size_t> ranking;          // descending confidence, ties by ascending label
    std::vector<std::vector<double>> coarse;   // per-classifier bin probabilities

    std::size_t top() const { return ranking.front(); }
};

/// Accumulates each head's probability for the bin containing each label's
/// price line, then applies softmax(score / N_c).
PredictionResult vote(const std::vector<std::vector<double>>& coarse, const std::vector<CoarsePartition>& partitions,
                      const PriceZoneTable& table);

/// Ranking of a distribution: descending value, ties by ascending index.
std::vector<std::size_t> rank_labels(const std::vector<double>& distribution);

PredictionResult ensemble_forward(const Tensor& h_bar, const EnsembleParams& params,
                                  const std::vector<CoarsePartition>& partitions, const PriceZoneTable& table);

/// Coarse targets [B][N_c] of a batch of prices.
std::vector<std::vector<std::size_t>> coarse_targets(const std::vector<double>& prices,
                                                     const std::vector<CoarsePartition>& partitions);

/// Class-weighted cross entropy over all heads. logits [B x N_c x bins];
/// weights w_c = B / n_c per head and batch are constants. Returns
/// -(1 / (N_c * B)) * sum_b sum_k w_{k,c} log softmax(y)_{c}.
Tensor weighted_ce_loss(const Tensor& logits, const std::vector<std::vector<std::size_t>>& targets);
Tensor weighted_ce_loss(const Tensor& logits, const std::vector<double>& prices,
                        const std::vector<CoarsePartition>& partitions);

/// Fraction of samples whose true label is among the first k ranked labels.
double top_k_accuracy(const std::vector<PredictionResult>& results, const std::vector<std::size_t>& labels,
                      std::size_t k);

/// counts[true][argmax].
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<PredictionResult>& results,
                                                       const std::vector<std::size_t>& labels, std::size_t classes);

}  // namespace ican
