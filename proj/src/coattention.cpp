#include "ican/coattention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ican/ops.hpp"

namespace ican {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

AttentionHead AttentionHead::create(ParameterStore& store, const std::string& prefix, std::size_t columns,
                                    std::size_t context, std::size_t k, std::size_t o_attn, std::size_t hidden,
                                    Rng& rng) {
    AttentionHead h;
    h.fusion = MfbParams::create(store, prefix + ".mfb", columns, context, k, o_attn, rng);
    h.w1 = store.add_glorot(prefix + ".w1", {o_attn, hidden}, o_attn, hidden, rng);
    h.b1 = store.add_zeros(prefix + ".b1", {hidden});
    h.w2 = store.add_glorot(prefix + ".w2", {hidden, 1}, hidden, 1, rng);
    return h;
}

void IcanConfig::validate() const {
    require(cells >= 1, "ican: cell count L must be >= 1");
    for (auto [v, name] : {std::pair{d_v, "d_v"}, {positions, "D"}, {d_a, "d_a"}, {slots, "T"}, {mfb_k, "mfb_k"},
                           {o_attn, "o_attn"}, {attn_hidden, "attn_hidden"}, {o_pred, "o_pred"}, {block_l, "block_l"},
                           {block_m, "block_m"}, {block_n, "block_n"}, {block_r, "block_r"}}) {
        require(v >= 1, std::string("ican: ") + name + " must be positive");
    }
}

CoAttentionCellParams CoAttentionCellParams::create(ParameterStore& store, const std::string& prefix,
                                                    const IcanConfig& cfg, Rng& rng) {
    cfg.validate();
    CoAttentionCellParams p;
    p.visual = AttentionHead::create(store, prefix + ".f_v", cfg.d_v, cfg.d_a, cfg.mfb_k, cfg.o_attn, cfg.attn_hidden, rng);
    p.attribute =
        AttentionHead::create(store, prefix + ".f_a", cfg.d_a, cfg.d_v, cfg.mfb_k, cfg.o_attn, cfg.attn_hidden, rng);
    p.fusion = BlockParams::create(store, prefix + ".g", cfg.d_v, cfg.d_a, cfg.o_pred, cfg.block_l, cfg.block_m,
                                   cfg.block_n, cfg.block_r, rng);
    return p;
}

Tensor pool_positions(const Tensor& h) {
    require(h.dim() == 2, "pool_positions: expected [c x n], got " + shape_str(h.shape()));
    return reduce_sum(h, 1);
}

Tensor attention_weights(const Tensor& h, const Tensor& context, const AttentionHead& head) {
    require(h.dim() == 2, "attention_weights: expected [c x n], got " + shape_str(h.shape()));
    const Tensor fused = mfb_fuse_columns(h, context, head.fusion);          // [n x o_attn]
    const Tensor hidden = relu(add(matmul(fused, head.w1), head.b1));       // [n x hidden]
    const Tensor scores = reshape(matmul(hidden, head.w2), {h.extent(1)});  // [n]
    return softmax(scores, 0);
}

Tensor refine(const Tensor& h, const Tensor& alpha) {
    require(h.dim() == 2 && alpha.dim() == 1 && alpha.numel() == h.extent(1),
            "refine: weights " + shape_str(alpha.shape()) + " do not match map " + shape_str(h.shape()));
    return mul(h, alpha);
}

CellOutput cell_forward(const Tensor& h_v, const Tensor& h_a, const CoAttentionCellParams& params) {
    require(h_v.dim() == 2 && h_a.dim() == 2, "cell_forward: maps must be 2-D, got " + shape_str(h_v.shape()) +
                                                  " and " + shape_str(h_a.shape()));
    CellOutput out;
    const Tensor pooled_a0 = pool_positions(h_a);
    out.alpha_v = attention_weights(h_v, pooled_a0, params.visual);
    out.h_v = refine(h_v, out.alpha_v);
    out.pooled_v = pool_positions(out.h_v);
    out.alpha_a = attention_weights(h_a, out.pooled_v, params.attribute);
    out.h_a = refine(h_a, out.alpha_a);
    out.pooled_a = pool_positions(out.h_a);
    out.h_o = block_fuse(out.pooled_v, out.pooled_a, params.fusion);
    return out;
}

IcanOutput ican_forward(const Tensor& h_v, const Tensor& h_a, const CoAttentionCellParams& params,
                        std::size_t cells) {
    require(cells >= 1, "ican_forward: cell count must be >= 1");
    IcanOutput out;
    Tensor v = h_v, a = h_a;
    for (std::size_t l = 0; l < cells; ++l) {
        CellOutput c = cell_forward(v, a, params);
        out.per_cell.push_back(c.h_o);
        out.attention.visual.push_back(to_vec(c.alpha_v));
        out.attention.attribute.push_back(to_vec(c.alpha_a));
        v = c.h_v;
        a = c.h_a;
    }
    Tensor total = out.per_cell.front();
    for (std::size_t l = 1; l < cells; ++l) total = add(total, out.per_cell[l]);
    out.h_bar = cells == 1 ? total : scale(total, 1.0 / static_cast<double>(cells));
    return out;
}

void write_pgm(const std::filesystem::path& path, const std::vector<double>& weights, std::size_t side) {
    require(side * side == weights.size(), "write_pgm: " + std::to_string(weights.size()) + " weights are not " +
                                               std::to_string(side) + "x" + std::to_string(side));
    const auto [lo, hi] = std::minmax_element(weights.begin(), weights.end());
    std::vector<unsigned char> pixels(weights.size(), 128);
    if (*hi > *lo) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            pixels[i] = static_cast<unsigned char>(std::lround(255.0 * (weights[i] - *lo) / (*hi - *lo)));
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "P5\n" << side << ' ' << side << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::filesystem::path> export_attention(const AttentionRecord& record, std::size_t sample_id,
                                                    const std::vector<std::string>& slot_names,
                                                    const std::filesystem::path& dir) {
    require(record.visual.size() == record.attribute.size() && !record.visual.empty(),
            "export_attention: incomplete attention record");
    std::filesystem::create_directories(dir);
    const std::string stem = "sample" + std::to_string(sample_id);
    std::vector<std::filesystem::path> written;

    auto open = [&](const std::string& name) {
        written.push_back(dir / name);
        std::ofstream os(written.back());
        if (!os) throw std::runtime_error("cannot write " + written.back().string());
        os.precision(17);
        return os;
    };

    {
        auto os = open(stem + "_attributes.csv");
        os << "cell_index,slot_index,slot_name,weight\n";
        for (std::size_t l = 0; l < record.cells(); ++l) {
            const auto& w = record.attribute[l];
            require(slot_names.size() == w.size(), "export_attention: " + std::to_string(slot_names.size()) +
                                                       " slot names for " + std::to_string(w.size()) + " weights");
            for (std::size_t t = 0; t < w.size(); ++t) os << l << ',' << t << ',' << slot_names[t] << ',' << w[t] << '\n';
        }
        if (!os) throw std::runtime_error("failed writing " + written.back().string());
    }
    {
        auto os = open(stem + "_visual.csv");
        os << "cell_index,slot_index,weight\n";
        for (std::size_t l = 0; l < record.cells(); ++l) {
            const auto& w = record.visual[l];
            for (std::size_t i = 0; i < w.size(); ++i) os << l << ',' << i << ',' << w[i] << '\n';
        }
        if (!os) throw std::runtime_error("failed writing " + written.back().string());
    }
    const std::size_t d = record.visual.front().size();
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
    if (side * side == d) {
        for (std::size_t l = 0; l < record.cells(); ++l) {
            written.push_back(dir / (stem + "_visual_cell" + std::to_string(l) + ".pgm"));
            write_pgm(written.back(), record.visual[l], side);
        }
    }
    return written;
}

}  // namespace ican
