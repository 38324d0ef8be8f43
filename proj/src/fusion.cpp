#include "ican/fusion.hpp"

#include <stdexcept>

#include "ican/ops.hpp"

namespace ican {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::size_t feature_dim(const Tensor& t, const char* op, const char* which) {
    require(t.dim() == 1 || t.dim() == 2,
            std::string(op) + ": " + which + " must be [d] or [B x d], got " + shape_str(t.shape()));
    return t.shape().back();
}

Tensor as_rows(const Tensor& t) { return t.dim() == 1 ? reshape(t, {1, t.numel()}) : t; }

Tensor block_single(const Tensor& x, const Tensor& y, const BlockParams& p) {
    const Tensor xt = matmul(reshape(x, {1, p.dx()}), p.a);  // [1 x L*R]
    const Tensor yt = matmul(reshape(y, {1, p.dy()}), p.b);  // [1 x M*R]
    std::vector<Tensor> terms;
    terms.reserve(p.r);
    for (std::size_t r = 0; r < p.r; ++r) {
        const Tensor xr = reshape(slice(xt, 1, r * p.l, (r + 1) * p.l), {p.l, 1});
        const Tensor yr = slice(yt, 1, r * p.m, (r + 1) * p.m);
        const Tensor outer = reshape(matmul(xr, yr), {1, p.l * p.m});
        const Tensor core = reshape(slice(p.cores, 0, r, r + 1), {p.l * p.m, p.n});
        terms.push_back(matmul(outer, core));  // [1 x N]
    }
    const Tensor s = terms.size() == 1 ? terms.front() : concat(terms, 1);
    return reshape(matmul(s, transpose(p.c)), {p.o()});
}

}  // namespace

MfbParams MfbParams::create(ParameterStore& store, const std::string& prefix, std::size_t dx, std::size_t dy,
                            std::size_t k, std::size_t o, Rng& rng) {
    require(k >= 1 && o >= 1, "mfb: k and o must be positive");
    MfbParams p;
    p.k = k;
    p.o = o;
    p.u_proj = store.add_glorot(prefix + ".u", {dx, k * o}, dx, k * o, rng);
    p.v_proj = store.add_glorot(prefix + ".v", {dy, k * o}, dy, k * o, rng);
    return p;
}

void MfbParams::validate() const {
    require(k >= 1 && o >= 1, "mfb: k and o must be positive");
    require(u_proj.dim() == 2 && v_proj.dim() == 2, "mfb: projections must be matrices");
    require(u_proj.extent(1) == k * o && v_proj.extent(1) == k * o,
            "mfb: projection widths " + shape_str(u_proj.shape()) + ", " + shape_str(v_proj.shape()) +
                " must equal k*o = " + std::to_string(k * o));
}

BlockParams BlockParams::create(ParameterStore& store, const std::string& prefix, std::size_t dx, std::size_t dy,
                                std::size_t o, std::size_t l, std::size_t m, std::size_t n, std::size_t r, Rng& rng) {
    require(dx && dy && o && l && m && n && r, "block: all extents must be positive");
    BlockParams p;
    p.l = l;
    p.m = m;
    p.n = n;
    p.r = r;
    p.a = store.add_glorot(prefix + ".a", {dx, l * r}, dx, l, rng);
    p.b = store.add_glorot(prefix + ".b", {dy, m * r}, dy, m, rng);
    p.c = store.add_glorot(prefix + ".c", {o, n * r}, n * r, o, rng);
    p.cores = store.add_glorot(prefix + ".cores", {r, l, m, n}, l * m, n, rng);
    return p;
}

void BlockParams::validate() const {
    require(l && m && n && r, "block: all extents must be positive");
    require(a.dim() == 2 && a.extent(1) == l * r, "block: A must be [d_x x L*R], got " + shape_str(a.shape()));
    require(b.dim() == 2 && b.extent(1) == m * r, "block: B must be [d_y x M*R], got " + shape_str(b.shape()));
    require(c.dim() == 2 && c.extent(1) == n * r, "block: C must be [o x N*R], got " + shape_str(c.shape()));
    require(cores.shape() == Shape{r, l, m, n}, "block: cores must be [R x L x M x N], got " + shape_str(cores.shape()));
}

Tensor mfb_fuse(const Tensor& x, const Tensor& y, const MfbParams& p) {
    p.validate();
    const std::size_t dx = feature_dim(x, "mfb_fuse", "x");
    const std::size_t dy = feature_dim(y, "mfb_fuse", "y");
    require(dx == p.dx() && dy == p.dy() && x.dim() == y.dim() && (x.dim() == 1 || x.extent(0) == y.extent(0)),
            "mfb_fuse: inputs " + shape_str(x.shape()) + ", " + shape_str(y.shape()) + " do not match params [" +
                std::to_string(p.dx()) + ", " + std::to_string(p.dy()) + "]");
    const Tensor joint = mul(matmul(as_rows(x), p.u_proj), matmul(as_rows(y), p.v_proj));
    const Tensor z = sum_pool(joint, p.k);
    return x.dim() == 1 ? reshape(z, {p.o}) : z;
}

Tensor mfb_fuse_columns(const Tensor& h, const Tensor& y, const MfbParams& p) {
    p.validate();
    require(h.dim() == 2 && h.extent(0) == p.dx() && y.dim() == 1 && y.numel() == p.dy(),
            "mfb_fuse_columns: h " + shape_str(h.shape()) + " / context " + shape_str(y.shape()) +
                " do not match params [" + std::to_string(p.dx()) + ", " + std::to_string(p.dy()) + "]");
    const Tensor proj = matmul(transpose(h), p.u_proj);  // [n x k*o]
    const Tensor ctx = reshape(matmul(reshape(y, {1, p.dy()}), p.v_proj), {p.k * p.o});
    return sum_pool(mul(proj, ctx), p.k);
}

Tensor block_fuse(const Tensor& x, const Tensor& y, const BlockParams& p) {
    p.validate();
    const std::size_t dx = feature_dim(x, "block_fuse", "x");
    const std::size_t dy = feature_dim(y, "block_fuse", "y");
    require(dx == p.dx() && dy == p.dy() && x.dim() == y.dim() && (x.dim() == 1 || x.extent(0) == y.extent(0)),
            "block_fuse: inputs " + shape_str(x.shape()) + ", " + shape_str(y.shape()) + " do not match params [" +
                std::to_string(p.dx()) + ", " + std::to_string(p.dy()) + "]");
    if (x.dim() == 1) return block_single(x, y, p);
    std::vector<Tensor> rows;
    for (std::size_t i = 0; i < x.extent(0); ++i) {
        rows.push_back(block_single(reshape(slice(x, 0, i, i + 1), {dx}), reshape(slice(y, 0, i, i + 1), {dy}), p));
    }
    return stack(rows);
}

Tensor simple_fuse(SimpleFusion kind, const Tensor& x, const Tensor& y) {
    feature_dim(x, "simple_fuse", "x");
    feature_dim(y, "simple_fuse", "y");
    switch (kind) {
        case SimpleFusion::concat:
            require(x.dim() == y.dim() && (x.dim() == 1 || x.extent(0) == y.extent(0)),
                    "simple_fuse(concat): batch mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
            return concat({x, y}, x.dim() - 1);
        case SimpleFusion::add:
        case SimpleFusion::product:
            require(x.shape() == y.shape(), "simple_fuse: add/product need equal shapes, got " + shape_str(x.shape()) +
                                                " and " + shape_str(y.shape()));
            return kind == SimpleFusion::add ? add(x, y) : mul(x, y);
    }
    throw std::invalid_argument("simple_fuse: unknown kind");
}

const char* to_string(FusionKind kind) {
    switch (kind) {
        case FusionKind::concat: return "concat";
        case FusionKind::add: return "add";
        case FusionKind::product: return "product";
        case FusionKind::mfb: return "mfb";
        case FusionKind::block: return "block";
    }
    return "?";
}

Tensor Fusion::apply(const Tensor& x, const Tensor& y) const {
    switch (kind) {
        case FusionKind::concat: return simple_fuse(SimpleFusion::concat, x, y);
        case FusionKind::add: return simple_fuse(SimpleFusion::add, x, y);
        case FusionKind::product: return simple_fuse(SimpleFusion::product, x, y);
        case FusionKind::mfb: return mfb_fuse(x, y, mfb);
        case FusionKind::block: return block_fuse(x, y, block);
    }
    throw std::invalid_argument("unknown fusion kind");
}

std::size_t Fusion::output_dim(std::size_t dx, std::size_t dy) const {
    switch (kind) {
        case FusionKind::concat: return dx + dy;
        case FusionKind::add:
        case FusionKind::product:
            require(dx == dy, "add/product fusion needs d_x == d_y");
            return dx;
        case FusionKind::mfb: return mfb.o;
        case FusionKind::block: return block.o();
    }
    return 0;
}

std::vector<double> DenseBilinear::contract(std::span<const double> x, std::span<const double> y) const {
    require(x.size() == dx && y.size() == dy, "dense bilinear: input size mismatch");
    std::vector<double> z(o, 0.0);
    for (std::size_t i = 0; i < o; ++i)
        for (std::size_t a = 0; a < dx; ++a)
            for (std::size_t b = 0; b < dy; ++b) z[i] += x[a] * at(i, a, b) * y[b];
    return z;
}

DenseBilinear reconstruct_bilinear_oracle(const MfbParams& p) {
    p.validate();
    DenseBilinear w{p.dx(), p.dy(), p.o, {}};
    require(w.dx * w.dy * w.o <= kDenseOracleLimit, "reconstruct_bilinear_oracle: tensor too large");
    w.values.assign(w.dx * w.dy * w.o, 0.0);
    const auto u = p.u_proj.values();
    const auto v = p.v_proj.values();
    const std::size_t width = p.k * p.o;
    // W_i = sum_d u_d v_d^T over the k latent columns of unit i
    for (std::size_t i = 0; i < p.o; ++i)
        for (std::size_t d = 0; d < p.k; ++d) {
            const std::size_t col = i * p.k + d;
            for (std::size_t a = 0; a < w.dx; ++a)
                for (std::size_t b = 0; b < w.dy; ++b)
                    w.values[(i * w.dx + a) * w.dy + b] += u[a * width + col] * v[b * width + col];
        }
    return w;
}

DenseBilinear reconstruct_bilinear_oracle(const BlockParams& p) {
    p.validate();
    DenseBilinear w{p.dx(), p.dy(), p.o(), {}};
    require(w.dx * w.dy * w.o <= kDenseOracleLimit, "reconstruct_bilinear_oracle: tensor too large");
    w.values.assign(w.dx * w.dy * w.o, 0.0);
    const auto a = p.a.values();
    const auto b = p.b.values();
    const auto c = p.c.values();
    const auto d = p.cores.values();
    const std::size_t lr = p.l * p.r, mr = p.m * p.r, nr = p.n * p.r;
    // T = D^{bd} x1 A x2 B x3 C, one block-diagonal term at a time
    for (std::size_t r = 0; r < p.r; ++r)
        for (std::size_t l = 0; l < p.l; ++l)
            for (std::size_t m = 0; m < p.m; ++m)
                for (std::size_t n = 0; n < p.n; ++n) {
                    const double core = d[((r * p.l + l) * p.m + m) * p.n + n];
                    for (std::size_t i = 0; i < w.o; ++i) {
                        const double ci = c[i * nr + r * p.n + n] * core;
                        for (std::size_t xa = 0; xa < w.dx; ++xa) {
                            const double ai = a[xa * lr + r * p.l + l] * ci;
                            for (std::size_t yb = 0; yb < w.dy; ++yb)
                                w.values[(i * w.dx + xa) * w.dy + yb] += ai * b[yb * mr + r * p.m + m];
                        }
                    }
                }
    return w;
}

}  // namespace ican
