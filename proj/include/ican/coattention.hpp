#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ican/fusion.hpp"
#include "ican/params.hpp"
#include "ican/tensor.hpp"

namespace ican {

/// One-glimpse attention head: MFB of each column with a context vector,
/// then position-wise affine -> relu -> affine to a scalar score.
struct AttentionHead {
    MfbParams fusion;  // column dim x context dim -> o_attn
    Tensor w1;         // [o_attn x hidden]
    Tensor b1;         // [hidden]
    Tensor w2;         // [hidden x 1]; a bias here would cancel in the softmax

    static AttentionHead create(ParameterStore& store, const std::string& prefix, std::size_t columns,
                                std::size_t context, std::size_t k, std::size_t o_attn, std::size_t hidden, Rng& rng);
};

struct IcanConfig {
    std::size_t cells = 3;  // L
    std::size_t d_v = 64;
    std::size_t positions = 16;  // D
    std::size_t d_a = 32;
    std::size_t slots = 13;  // T
    std::size_t mfb_k = 5;
    std::size_t o_attn = 64;
    std::size_t attn_hidden = 128;
    std::size_t o_pred = 128;
    std::size_t block_l = 8, block_m = 8, block_n = 8, block_r = 4;

    void validate() const;
};

/// Weights of a co-attention cell, shared by every cell of the network.
struct CoAttentionCellParams {
    AttentionHead visual;     // f_v: visual columns guided by pooled attributes
    AttentionHead attribute;  // f_a: attribute columns guided by pooled visual
    BlockParams fusion;       // g

    static CoAttentionCellParams create(ParameterStore& store, const std::string& prefix, const IcanConfig& cfg,
                                        Rng& rng);
};

/// Per-cell attention vectors (alpha_v over D positions, alpha_a over T slots).
struct AttentionRecord {
    std::vector<std::vector<double>> visual;
    std::vector<std::vector<double>> attribute;

    std::size_t cells() const { return visual.size(); }
};

/// h [c x n] -> [c], the sum over positions.
Tensor pool_positions(const Tensor& h);

/// Softmax over the n positions of h [c x n] of the head's scores against context [c'].
Tensor attention_weights(const Tensor& h, const Tensor& context, const AttentionHead& head);

/// out[:, i] = alpha[i] * h[:, i].
Tensor refine(const Tensor& h, const Tensor& alpha);

struct CellOutput {
    Tensor h_v;       // refined visual map
    Tensor h_a;       // refined attribute map
    Tensor pooled_v;  // pool of refined visual map
    Tensor pooled_a;  // pool of refined attribute map
    Tensor h_o;       // predictive vector [o_pred]
    Tensor alpha_v;
    Tensor alpha_a;
};

/// Top-down attention and refinement of the visual map, then bottom-up
/// attention over attributes guided by the refined visual map, then fusion.
CellOutput cell_forward(const Tensor& h_v, const Tensor& h_a, const CoAttentionCellParams& params);

struct IcanOutput {
    Tensor h_bar;  // mean of the per-cell predictive vectors
    std::vector<Tensor> per_cell;
    AttentionRecord attention;
};

IcanOutput ican_forward(const Tensor& h_v, const Tensor& h_a, const CoAttentionCellParams& params,
                        std::size_t cells);

/// Writes attention for one sample into `dir`:
///   sample<id>_attributes.csv (cell_index,slot_index,slot_name,weight)
///   sample<id>_visual.csv     (cell_index,slot_index,weight)
///   sample<id>_visual_cell<l>.pgm when D is a perfect square.
/// Returns the paths written.
std::vector<std::filesystem::path> export_attention(const AttentionRecord& record, std::size_t sample_id,
                                                    const std::vector<std::string>& slot_names,
                                                    const std::filesystem::path& dir);

/// Binary P5 grayscale image, weights min-max scaled to 0..255; a constant
/// input maps to mid gray.
void write_pgm(const std::filesystem::path& path, const std::vector<double>& weights, std::size_t side);

}  // namespace ican
