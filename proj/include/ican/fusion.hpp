#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ican/params.hpp"
#include "ican/tensor.hpp"

namespace ican {

/// Factorized bilinear pooling: z = SumPooling(U^T x o V^T y, k).
/// Output unit i owns projection columns [i*k, (i+1)*k).
struct MfbParams {
    Tensor u_proj;  // [d_x x k*o]
    Tensor v_proj;  // [d_y x k*o]
    std::size_t k = 1;
    std::size_t o = 1;

    static MfbParams create(ParameterStore& store, const std::string& prefix, std::size_t dx, std::size_t dy,
                            std::size_t k, std::size_t o, Rng& rng);

    std::size_t dx() const { return u_proj.extent(0); }
    std::size_t dy() const { return v_proj.extent(0); }
    std::size_t parameter_count() const { return (dx() + dy()) * k * o; }
    void validate() const;
};

/// Block-term bilinear fusion. Term r uses columns [r*L, (r+1)*L) of A,
/// [r*M, (r+1)*M) of B, [r*N, (r+1)*N) of C and core r.
struct BlockParams {
    Tensor a;      // [d_x x L*R]
    Tensor b;      // [d_y x M*R]
    Tensor c;      // [o x N*R]
    Tensor cores;  // [R x L x M x N]
    std::size_t l = 1, m = 1, n = 1, r = 1;

    static BlockParams create(ParameterStore& store, const std::string& prefix, std::size_t dx, std::size_t dy,
                              std::size_t o, std::size_t l, std::size_t m, std::size_t n, std::size_t r, Rng& rng);

    std::size_t dx() const { return a.extent(0); }
    std::size_t dy() const { return b.extent(0); }
    std::size_t o() const { return c.extent(0); }
    std::size_t parameter_count() const { return dx() * l * r + dy() * m * r + o() * n * r + r * l * m * n; }
    void validate() const;
};

enum class SimpleFusion { concat, add, product };

/// x: [d_x] or [B x d_x]; y likewise. Returns [o] or [B x o].
Tensor mfb_fuse(const Tensor& x, const Tensor& y, const MfbParams& p);

/// mfb_fuse applied to every column of h ([d_x x n]) against one shared
/// context y ([d_y]); returns [n x o], row i fusing column i.
Tensor mfb_fuse_columns(const Tensor& h, const Tensor& y, const MfbParams& p);

/// x: [d_x] or [B x d_x]; y likewise. Returns [o] or [B x o].
Tensor block_fuse(const Tensor& x, const Tensor& y, const BlockParams& p);

Tensor simple_fuse(SimpleFusion kind, const Tensor& x, const Tensor& y);

enum class FusionKind { concat, add, product, mfb, block };

const char* to_string(FusionKind kind);

/// Any of the fusion operators together with the parameters it needs.
struct Fusion {
    FusionKind kind = FusionKind::concat;
    MfbParams mfb;
    BlockParams block;

    Tensor apply(const Tensor& x, const Tensor& y) const;
    /// Output width given input widths.
    std::size_t output_dim(std::size_t dx, std::size_t dy) const;
};

/// Explicit third-order bilinear tensor W[i][a][b] with z_i = x^T W_i y.
/// Reference path for checking the factorized operators on small sizes.
struct DenseBilinear {
    std::size_t dx = 0, dy = 0, o = 0;
    std::vector<double> values;  // index (i * dx + a) * dy + b

    double at(std::size_t i, std::size_t a, std::size_t b) const { return values[(i * dx + a) * dy + b]; }
    std::vector<double> contract(std::span<const double> x, std::span<const double> y) const;
};

inline constexpr std::size_t kDenseOracleLimit = 1'000'000;

DenseBilinear reconstruct_bilinear_oracle(const MfbParams& p);
DenseBilinear reconstruct_bilinear_oracle(const BlockParams& p);

}  // namespace ican
