#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ican/fusion.hpp"
#include "ican/gradcheck.hpp"
#include "ican/ops.hpp"
#include "test_util.hpp"

using namespace ican;
using ican::testing::max_rel_diff;
using ican::testing::random_tensor;

namespace {

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Independent evaluation of z_i = x^T (U_i V_i^T) y with U_i, V_i the k latent
// columns of output i, written with plain loops.
std::vector<double> mfb_by_explicit_slices(const Tensor& x, const Tensor& y, const MfbParams& p) {
    const std::size_t dx = p.dx(), dy = p.dy(), width = p.k * p.o;
    std::vector<double> z(p.o, 0.0);
    for (std::size_t i = 0; i < p.o; ++i) {
        std::vector<double> w(dx * dy, 0.0);
        for (std::size_t a = 0; a < dx; ++a)
            for (std::size_t b = 0; b < dy; ++b)
                for (std::size_t d = 0; d < p.k; ++d)
                    w[a * dy + b] += p.u_proj.at(a, i * p.k + d) * p.v_proj.at(b, i * p.k + d);
        for (std::size_t a = 0; a < dx; ++a)
            for (std::size_t b = 0; b < dy; ++b) z[i] += x[a] * w[a * dy + b] * y[b];
    }
    (void)width;
    return z;
}

// Independent triple-loop contraction of the block-term tensor, element by
// element from the sum of mode products.
std::vector<double> block_by_elementwise_tensor(const Tensor& x, const Tensor& y, const BlockParams& p) {
    const std::size_t dx = p.dx(), dy = p.dy(), o = p.o();
    std::vector<double> z(o, 0.0);
    for (std::size_t i = 0; i < o; ++i)
        for (std::size_t a = 0; a < dx; ++a)
            for (std::size_t b = 0; b < dy; ++b) {
                double t = 0.0;
                for (std::size_t r = 0; r < p.r; ++r)
                    for (std::size_t l = 0; l < p.l; ++l)
                        for (std::size_t m = 0; m < p.m; ++m)
                            for (std::size_t n = 0; n < p.n; ++n)
                                t += p.cores[((r * p.l + l) * p.m + m) * p.n + n] * p.a.at(a, r * p.l + l) *
                                     p.b.at(b, r * p.m + m) * p.c.at(i, r * p.n + n);
                z[i] += t * x[a] * y[b];
            }
    return z;
}

MfbParams random_mfb(std::size_t dx, std::size_t dy, std::size_t k, std::size_t o, Rng& rng) {
    MfbParams p;
    p.k = k;
    p.o = o;
    p.u_proj = random_tensor({dx, k * o}, rng, -1, 1, true);
    p.v_proj = random_tensor({dy, k * o}, rng, -1, 1, true);
    return p;
}

BlockParams random_block(std::size_t dx, std::size_t dy, std::size_t o, std::size_t l, std::size_t m, std::size_t n,
                         std::size_t r, Rng& rng) {
    BlockParams p;
    p.l = l;
    p.m = m;
    p.n = n;
    p.r = r;
    p.a = random_tensor({dx, l * r}, rng, -1, 1, true);
    p.b = random_tensor({dy, m * r}, rng, -1, 1, true);
    p.c = random_tensor({o, n * r}, rng, -1, 1, true);
    p.cores = random_tensor({r, l, m, n}, rng, -1, 1, true);
    return p;
}

}  // namespace

TEST_CASE("mfb_fuse") {
    Rng rng(1);
    SUBCASE("zero x annihilates") {
        const auto p = random_mfb(3, 2, 2, 4, rng);
        const Tensor z = mfb_fuse(Tensor::zeros({3}), random_tensor({2}, rng), p);
        CHECK(to_vec(z) == std::vector<double>(4, 0.0));
    }
    SUBCASE("k = 1 is the plain Hadamard product of projections") {
        const auto p = random_mfb(4, 3, 1, 5, rng);
        const Tensor x = random_tensor({4}, rng), y = random_tensor({3}, rng);
        const Tensor z = mfb_fuse(x, y, p);
        const Tensor ux = matmul(reshape(x, {1, 4}), p.u_proj);
        const Tensor vy = matmul(reshape(y, {1, 3}), p.v_proj);
        CHECK(to_vec(z) == to_vec(mul(ux, vy)));
    }
    SUBCASE("matches the explicit bilinear forms") {
        const auto p = random_mfb(3, 2, 2, 2, rng);
        const Tensor x = random_tensor({3}, rng), y = random_tensor({2}, rng);
        CHECK(max_rel_diff(mfb_fuse(x, y, p).values(), mfb_by_explicit_slices(x, y, p)) < 1e-10);
    }
    SUBCASE("batched form maps over rows") {
        const auto p = random_mfb(3, 4, 3, 2, rng);
        const Tensor xb = random_tensor({5, 3}, rng), yb = random_tensor({5, 4}, rng);
        const Tensor zb = mfb_fuse(xb, yb, p);
        REQUIRE(zb.shape() == Shape{5, 2});
        for (std::size_t i = 0; i < 5; ++i) {
            const Tensor zi = mfb_fuse(reshape(slice(xb, 0, i, i + 1), {3}), reshape(slice(yb, 0, i, i + 1), {4}), p);
            CHECK(zi[0] == zb.at(i, 0));
            CHECK(zi[1] == zb.at(i, 1));
        }
    }
    SUBCASE("column form equals per-column fusion") {
        const auto p = random_mfb(4, 3, 2, 3, rng);
        const Tensor h = random_tensor({4, 6}, rng), y = random_tensor({3}, rng);
        const Tensor all = mfb_fuse_columns(h, y, p);
        REQUIRE(all.shape() == Shape{6, 3});
        for (std::size_t col = 0; col < 6; ++col) {
            const Tensor zc = mfb_fuse(reshape(transpose(slice(h, 1, col, col + 1)), {4}), y, p);
            for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(zc[i] - all.at(col, i)) < 1e-12);
        }
    }
    SUBCASE("dimension mismatch rejected") {
        const auto p = random_mfb(3, 2, 2, 2, rng);
        CHECK_THROWS_AS(mfb_fuse(Tensor::zeros({4}), Tensor::zeros({2}), p), std::invalid_argument);
        CHECK_THROWS_AS(mfb_fuse(Tensor::zeros({3}), Tensor::zeros({3}), p), std::invalid_argument);
    }
}

TEST_CASE("block_fuse") {
    Rng rng(2);
    SUBCASE("rank-one reduction") {
        const auto p = random_block(3, 2, 4, 1, 1, 1, 1, rng);
        const Tensor x = random_tensor({3}, rng), y = random_tensor({2}, rng);
        const Tensor z = block_fuse(x, y, p);
        double ax = 0, by = 0;
        for (std::size_t i = 0; i < 3; ++i) ax += p.a[i] * x[i];
        for (std::size_t i = 0; i < 2; ++i) by += p.b[i] * y[i];
        for (std::size_t i = 0; i < 4; ++i) CHECK(z[i] == doctest::Approx(p.cores[0] * ax * by * p.c[i]).epsilon(1e-12));
    }
    SUBCASE("zero cores give zero output") {
        auto p = random_block(4, 3, 3, 2, 2, 2, 2, rng);
        p.cores = Tensor::zeros({2, 2, 2, 2});
        CHECK(to_vec(block_fuse(random_tensor({4}, rng), random_tensor({3}, rng), p)) == std::vector<double>(3, 0.0));
    }
    SUBCASE("equals contraction of the dense tensor") {
        const auto p = random_block(4, 3, 3, 2, 2, 2, 2, rng);
        const Tensor x = random_tensor({4}, rng), y = random_tensor({3}, rng);
        const Tensor z = block_fuse(x, y, p);
        CHECK(max_rel_diff(z.values(), block_by_elementwise_tensor(x, y, p)) < 1e-10);
        CHECK(max_rel_diff(z.values(), reconstruct_bilinear_oracle(p).contract(x.values(), y.values())) < 1e-10);
    }
    SUBCASE("batched form") {
        const auto p = random_block(4, 3, 3, 2, 3, 2, 2, rng);
        const Tensor xb = random_tensor({2, 4}, rng), yb = random_tensor({2, 3}, rng);
        const Tensor zb = block_fuse(xb, yb, p);
        REQUIRE(zb.shape() == Shape{2, 3});
        const Tensor z1 = block_fuse(reshape(slice(xb, 0, 1, 2), {4}), reshape(slice(yb, 0, 1, 2), {3}), p);
        for (std::size_t i = 0; i < 3; ++i) CHECK(z1[i] == zb.at(1, i));
    }
    SUBCASE("dimension mismatch rejected") {
        const auto p = random_block(4, 3, 3, 2, 2, 2, 2, rng);
        CHECK_THROWS_AS(block_fuse(Tensor::zeros({3}), Tensor::zeros({3}), p), std::invalid_argument);
    }
}

TEST_CASE("simple_fuse") {
    CHECK(to_vec(simple_fuse(SimpleFusion::concat, Tensor::vector({1}), Tensor::vector({2, 3}))) ==
          std::vector<double>{1, 2, 3});
    Rng rng(3);
    const Tensor x = random_tensor({5}, rng);
    CHECK(to_vec(simple_fuse(SimpleFusion::add, x, Tensor::zeros({5}))) == to_vec(x));
    CHECK(to_vec(simple_fuse(SimpleFusion::product, x, Tensor::ones({5}))) == to_vec(x));
    CHECK_THROWS_AS(simple_fuse(SimpleFusion::add, x, Tensor::zeros({4})), std::invalid_argument);
    CHECK_THROWS_AS(simple_fuse(SimpleFusion::product, x, Tensor::zeros({4})), std::invalid_argument);
    CHECK(simple_fuse(SimpleFusion::concat, Tensor::zeros({3, 2}), Tensor::zeros({3, 4})).shape() == Shape{3, 6});
}

TEST_CASE("reconstruct_bilinear_oracle") {
    Rng rng(4);
    SUBCASE("zero factors give the zero tensor") {
        MfbParams p;
        p.k = 2;
        p.o = 3;
        p.u_proj = Tensor::zeros({3, 6});
        p.v_proj = Tensor::zeros({2, 6});
        for (double v : reconstruct_bilinear_oracle(p).values) CHECK(v == 0.0);
    }
    SUBCASE("k = o = 1 is the rank-one outer product") {
        const auto p = random_mfb(3, 4, 1, 1, rng);
        const auto w = reconstruct_bilinear_oracle(p);
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = 0; b < 4; ++b) CHECK(w.at(0, a, b) == p.u_proj[a] * p.v_proj[b]);
    }
    SUBCASE("random small parameters agree with the factorized paths") {
        for (int trial = 0; trial < 20; ++trial) {
            const auto mp = random_mfb(5, 4, 3, 2, rng);
            const Tensor x = random_tensor({5}, rng), y = random_tensor({4}, rng);
            CHECK(max_rel_diff(mfb_fuse(x, y, mp).values(), reconstruct_bilinear_oracle(mp).contract(x.values(), y.values())) <
                  1e-10);
            CHECK(max_rel_diff(reconstruct_bilinear_oracle(mp).contract(x.values(), y.values()),
                               mfb_by_explicit_slices(x, y, mp)) < 1e-10);
        }
    }
    SUBCASE("size guard") {
        MfbParams big;
        big.k = 1;
        big.o = 200;
        big.u_proj = Tensor::zeros({100, 200});
        big.v_proj = Tensor::zeros({100, 200});
        CHECK_THROWS_AS(reconstruct_bilinear_oracle(big), std::invalid_argument);
    }
}

TEST_CASE("bilinearity in each argument") {
    Rng rng(5);
    const auto mp = random_mfb(4, 3, 2, 3, rng);
    const auto bp = random_block(4, 3, 3, 2, 2, 2, 2, rng);
    const Tensor x1 = random_tensor({4}, rng), x2 = random_tensor({4}, rng), y = random_tensor({3}, rng);
    const double a = 0.7, b = -1.3;
    const Tensor mix = add(scale(x1, a), scale(x2, b));
    for (int which = 0; which < 2; ++which) {
        auto f = [&](const Tensor& x) { return which == 0 ? mfb_fuse(x, y, mp) : block_fuse(x, y, bp); };
        const Tensor lhs = f(mix);
        const Tensor rhs = add(scale(f(x1), a), scale(f(x2), b));
        CHECK(max_rel_diff(lhs.values(), rhs.values()) < 1e-10);
    }
    // second argument
    const Tensor y2 = random_tensor({3}, rng);
    const Tensor ymix = add(scale(y, a), scale(y2, b));
    const Tensor lhs = block_fuse(x1, ymix, bp);
    const Tensor rhs = add(scale(block_fuse(x1, y, bp), a), scale(block_fuse(x1, y2, bp), b));
    CHECK(max_rel_diff(lhs.values(), rhs.values()) < 1e-10);
}

TEST_CASE("fusion gradients") {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        Rng rng(seed);
        const Tensor w = random_tensor({3}, rng);
        auto mp = random_mfb(4, 3, 2, 3, rng);
        auto bp = random_block(2, 2, 3, 2, 2, 2, 2, rng);
        Tensor x = random_tensor({4}, rng, -1, 1, true), y = random_tensor({3}, rng, -1, 1, true);
        Tensor xb = random_tensor({2}, rng, -1, 1, true), yb = random_tensor({2}, rng, -1, 1, true);
        const auto rm = finite_difference_check([&] { return sum(mul(mfb_fuse(x, y, mp), w)); },
                                                {x, y, mp.u_proj, mp.v_proj});
        CHECK(rm.max_rel_error < 1e-6);
        const auto rb = finite_difference_check([&] { return sum(mul(block_fuse(xb, yb, bp), w)); },
                                                {xb, yb, bp.a, bp.b, bp.c, bp.cores});
        CHECK(rb.max_rel_error < 1e-6);
        Tensor xs = random_tensor({3}, rng, -1, 1, true), ys = random_tensor({3}, rng, -1, 1, true);
        for (auto kind : {SimpleFusion::concat, SimpleFusion::add, SimpleFusion::product}) {
            const auto rs = finite_difference_check(
                [&] {
                    const Tensor z = simple_fuse(kind, xs, ys);
                    return sum(mul(z, z));
                },
                {xs, ys});
            CHECK(rs.max_rel_error < 1e-6);
        }
    }
}

TEST_CASE("parameter counts") {
    ParameterStore store;
    Rng rng(6);
    const auto mp = MfbParams::create(store, "mfb", 7, 5, 5, 20, rng);
    CHECK(mp.parameter_count() == (7 + 5) * 5 * 20);
    CHECK(store.scalar_count() == mp.parameter_count());
    ParameterStore store2;
    const auto bp = BlockParams::create(store2, "blk", 6, 4, 9, 2, 3, 4, 5, rng);
    CHECK(bp.parameter_count() == 6 * 2 * 5 + 4 * 3 * 5 + 9 * 4 * 5 + 5 * 2 * 3 * 4);
    CHECK(store2.scalar_count() == bp.parameter_count());
    CHECK_THROWS_AS(MfbParams::create(store, "mfb", 7, 5, 5, 20, rng), std::invalid_argument);
}
