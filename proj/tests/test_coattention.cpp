#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ican/coattention.hpp"
#include "ican/gradcheck.hpp"
#include "ican/ops.hpp"
#include "test_util.hpp"

using namespace ican;
using ican::testing::max_abs_diff;
using ican::testing::max_rel_diff;
using ican::testing::random_tensor;

namespace {

IcanConfig toy_config() {
    IcanConfig c;
    c.d_v = 8;
    c.positions = 9;
    c.d_a = 6;
    c.slots = 4;
    c.mfb_k = 2;
    c.o_attn = 4;
    c.attn_hidden = 5;
    c.o_pred = 3;
    c.block_l = c.block_m = c.block_n = c.block_r = 2;
    return c;
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor repeat_column(const std::vector<double>& col, std::size_t n) {
    std::vector<double> v;
    for (double x : col)
        for (std::size_t i = 0; i < n; ++i) v.push_back(x);
    return Tensor({col.size(), n}, v);
}

// Scalar-loop attention: per column MFB through mfb_fuse, transforms and a
// plain softmax computed in doubles.
std::vector<double> attention_by_loops(const Tensor& h, const Tensor& ctx, const AttentionHead& head) {
    const std::size_t c = h.extent(0), n = h.extent(1), o = head.w1.extent(0), hid = head.w1.extent(1);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> col(c);
        for (std::size_t r = 0; r < c; ++r) col[r] = h.at(r, i);
        const Tensor m = mfb_fuse(Tensor::vector(col), ctx, head.fusion);
        double s = 0.0;
        for (std::size_t j = 0; j < hid; ++j) {
            double a = head.b1[j];
            for (std::size_t q = 0; q < o; ++q) a += m[q] * head.w1.at(q, j);
            s += std::max(a, 0.0) * head.w2.at(j, 0);
        }
        scores[i] = s;
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (auto& s : scores) z += (s = std::exp(s - mx));
    for (auto& s : scores) s /= z;
    return scores;
}

std::vector<double> pool_by_loops(const Tensor& h) {
    std::vector<double> p(h.extent(0), 0.0);
    for (std::size_t r = 0; r < h.extent(0); ++r)
        for (std::size_t i = 0; i < h.extent(1); ++i) p[r] += h.at(r, i);
    return p;
}

Tensor refine_by_loops(const Tensor& h, const std::vector<double>& a) {
    std::vector<double> v(h.numel());
    for (std::size_t r = 0; r < h.extent(0); ++r)
        for (std::size_t i = 0; i < h.extent(1); ++i) v[r * h.extent(1) + i] = h.at(r, i) * a[i];
    return Tensor(h.shape(), v);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("pool_positions") {
    const Tensor p = pool_positions(Tensor::ones({3, 4}));
    CHECK(to_vec(p) == std::vector<double>{4, 4, 4});
    Rng rng(1);
    const Tensor col = random_tensor({5, 1}, rng);
    CHECK(to_vec(pool_positions(col)) == to_vec(col));
    const Tensor h = random_tensor({6, 7}, rng);
    CHECK(to_vec(pool_positions(h)) == to_vec(reduce_sum(h, 1)));
    CHECK_THROWS(pool_positions(Tensor::ones({3})));
}

TEST_CASE("attention weights") {
    Rng rng(2);
    ParameterStore store;
    const auto head = AttentionHead::create(store, "f", 6, 5, 2, 4, 7, rng);
    const Tensor ctx = random_tensor({5}, rng);

    const Tensor same = repeat_column(to_vec(random_tensor({6}, rng)), 4);
    const Tensor uniform = attention_weights(same, ctx, head);
    for (double a : uniform.values()) CHECK(a == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(to_vec(attention_weights(random_tensor({6, 1}, rng), ctx, head)) == std::vector<double>{1.0});

    const Tensor h = random_tensor({6, 4}, rng);
    CHECK(max_abs_diff(attention_weights(h, ctx, head).values(), attention_by_loops(h, ctx, head)) < 1e-14);
    CHECK_THROWS(attention_weights(random_tensor({5, 4}, rng), ctx, head));
    CHECK_THROWS(attention_weights(h, random_tensor({6}, rng), head));

    for (std::uint64_t seed : {3, 4, 5}) {
        Rng r(seed);
        ParameterStore s;
        const auto hd = AttentionHead::create(s, "f", 6, 5, 2, 4, 7, r);
        const Tensor hv = random_tensor({6, 4}, r, -1, 1, true);
        const Tensor c = random_tensor({5}, r, -1, 1, true);
        const Tensor w = random_tensor({4}, r);
        std::vector<Tensor> leaves{hv, c};
        for (auto& p : s.all()) leaves.push_back(p.tensor);
        const auto res = finite_difference_check([&] { return sum(mul(attention_weights(hv, c, hd), w)); }, leaves);
        CHECK(res.max_rel_error < 1e-6);
    }
}

TEST_CASE("refine") {
    Rng rng(6);
    const Tensor h = random_tensor({3, 4}, rng);
    const Tensor uniform = refine(h, Tensor::full({4}, 0.25));
    for (std::size_t i = 0; i < 12; ++i) CHECK(uniform[i] == h[i] * 0.25);
    const Tensor hot = refine(h, Tensor::vector({0, 0, 1, 0}));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t i = 0; i < 4; ++i) CHECK(hot.at(r, i) == (i == 2 ? h.at(r, i) : 0.0));
    const Tensor a = random_tensor({4}, rng, 0, 1);
    CHECK(to_vec(refine(h, a)) == to_vec(refine_by_loops(h, to_vec(a))));
    CHECK_THROWS(refine(h, Tensor::ones({3})));
}

TEST_CASE("cell forward") {
    const auto cfg = toy_config();
    Rng rng(7);
    ParameterStore store;
    const auto params = CoAttentionCellParams::create(store, "cell", cfg, rng);

    SUBCASE("symmetric inputs give uniform attention") {
        const auto vcol = to_vec(random_tensor({cfg.d_v}, rng));
        const auto acol = to_vec(random_tensor({cfg.d_a}, rng));
        const auto out = cell_forward(repeat_column(vcol, cfg.positions), repeat_column(acol, cfg.slots), params);
        for (double a : out.alpha_v.values()) CHECK(a == doctest::Approx(1.0 / 9).epsilon(1e-14));
        for (double a : out.alpha_a.values()) CHECK(a == doctest::Approx(0.25).epsilon(1e-14));
        // Uniform refinement leaves the pooled vectors equal to the original columns.
        CHECK(max_rel_diff(out.pooled_v.values(), vcol) < 1e-14);
        CHECK(max_rel_diff(out.pooled_a.values(), acol) < 1e-14);
        const Tensor expect = block_fuse(Tensor::vector(vcol), Tensor::vector(acol), params.fusion);
        CHECK(max_rel_diff(out.h_o.values(), expect.values()) < 1e-13);
    }

    SUBCASE("zero visual map gives zero output") {
        const auto out = cell_forward(Tensor::zeros({cfg.d_v, cfg.positions}), random_tensor({cfg.d_a, cfg.slots}, rng),
                                      params);
        for (double v : out.h_o.values()) CHECK(v == 0.0);
    }

    SUBCASE("matches a loop composition of the sub-operations") {
        const Tensor hv = random_tensor({cfg.d_v, cfg.positions}, rng);
        const Tensor ha = random_tensor({cfg.d_a, cfg.slots}, rng);
        const auto out = cell_forward(hv, ha, params);
        const auto av = attention_by_loops(hv, Tensor::vector(pool_by_loops(ha)), params.visual);
        const Tensor hv1 = refine_by_loops(hv, av);
        const auto pv = pool_by_loops(hv1);
        const auto aa = attention_by_loops(ha, Tensor::vector(pv), params.attribute);
        const Tensor ha1 = refine_by_loops(ha, aa);
        const auto pa = pool_by_loops(ha1);
        const Tensor ho = block_fuse(Tensor::vector(pv), Tensor::vector(pa), params.fusion);
        CHECK(max_abs_diff(out.alpha_v.values(), av) < 1e-13);
        CHECK(max_abs_diff(out.alpha_a.values(), aa) < 1e-13);
        CHECK(max_rel_diff(out.h_o.values(), ho.values()) < 1e-12);
    }

    SUBCASE("bilinear in the pooled vectors") {
        const auto out = cell_forward(random_tensor({cfg.d_v, cfg.positions}, rng),
                                      random_tensor({cfg.d_a, cfg.slots}, rng), params);
        for (double c : {-2.0, 0.5, 3.0}) {
            const Tensor scaled = block_fuse(scale(out.pooled_v, c), out.pooled_a, params.fusion);
            CHECK(max_rel_diff(scaled.values(), to_vec(scale(out.h_o, c))) < 1e-10);
        }
    }

    SUBCASE("refinement never grows a column") {
        const Tensor hv = random_tensor({cfg.d_v, cfg.positions}, rng);
        const Tensor ha = random_tensor({cfg.d_a, cfg.slots}, rng);
        const auto out = cell_forward(hv, ha, params);
        auto col_norm = [](const Tensor& h, std::size_t i) {
            double s = 0;
            for (std::size_t r = 0; r < h.extent(0); ++r) s += h.at(r, i) * h.at(r, i);
            return std::sqrt(s);
        };
        for (std::size_t i = 0; i < cfg.positions; ++i) CHECK(col_norm(out.h_v, i) <= col_norm(hv, i));
        for (std::size_t i = 0; i < cfg.slots; ++i) CHECK(col_norm(out.h_a, i) <= col_norm(ha, i));
    }

    SUBCASE("visual positions are permutation equivariant") {
        const Tensor hv = random_tensor({cfg.d_v, cfg.positions}, rng);
        const Tensor ha = random_tensor({cfg.d_a, cfg.slots}, rng);
        std::vector<std::size_t> perm(cfg.positions);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> pv(hv.numel());
        for (std::size_t r = 0; r < cfg.d_v; ++r)
            for (std::size_t i = 0; i < cfg.positions; ++i) pv[r * cfg.positions + i] = hv.at(r, perm[i]);
        const auto a = cell_forward(hv, ha, params);
        const auto b = cell_forward(Tensor(hv.shape(), pv), ha, params);
        for (std::size_t i = 0; i < cfg.positions; ++i) CHECK(b.alpha_v[i] == doctest::Approx(a.alpha_v[perm[i]]).epsilon(1e-13));
        CHECK(max_rel_diff(a.pooled_v.values(), b.pooled_v.values()) < 1e-12);
        CHECK(max_rel_diff(a.h_o.values(), b.h_o.values()) < 1e-12);
    }

    CHECK_THROWS(cell_forward(random_tensor({cfg.d_v + 1, cfg.positions}, rng), random_tensor({cfg.d_a, cfg.slots}, rng),
                              params));
}

TEST_CASE("ican forward") {
    auto cfg = toy_config();
    Rng rng(8);
    ParameterStore store;
    const auto params = CoAttentionCellParams::create(store, "ican", cfg, rng);
    const Tensor hv = random_tensor({cfg.d_v, cfg.positions}, rng);
    const Tensor ha = random_tensor({cfg.d_a, cfg.slots}, rng);

    const auto one = ican_forward(hv, ha, params, 1);
    CHECK(to_vec(one.h_bar) == to_vec(cell_forward(hv, ha, params).h_o));

    // Re-run the chain by hand and average.
    const auto three = ican_forward(hv, ha, params, 3);
    Tensor v = hv, a = ha;
    std::vector<double> mean(cfg.o_pred, 0.0);
    for (int l = 0; l < 3; ++l) {
        const auto c = cell_forward(v, a, params);
        for (std::size_t i = 0; i < cfg.o_pred; ++i) mean[i] += c.h_o[i] / 3.0;
        REQUIRE(to_vec(c.alpha_v) == three.attention.visual[l]);
        v = c.h_v;
        a = c.h_a;
    }
    CHECK(max_rel_diff(three.h_bar.values(), mean) < 1e-14);
    CHECK(three.attention.cells() == 3);

    for (std::size_t L = 1; L <= 5; ++L) {
        const auto out = ican_forward(hv, ha, params, L);
        for (const auto* group : {&out.attention.visual, &out.attention.attribute})
            for (const auto& w : *group) {
                double s = 0.0;
                for (double x : w) {
                    CHECK(x >= 0.0);
                    s += x;
                }
                CHECK(std::abs(s - 1.0) < 1e-12);
            }
    }
    CHECK_THROWS(ican_forward(hv, ha, params, 0));

    std::size_t counts[2];
    for (std::size_t L : {1, 5}) {
        cfg.cells = L;
        Rng r(9);
        ParameterStore s;
        CoAttentionCellParams::create(s, "ican", cfg, r);
        counts[L == 1 ? 0 : 1] = s.scalar_count();
    }
    CHECK(counts[0] == counts[1]);
}

TEST_CASE("end-to-end gradient through two cells") {
    const auto cfg = toy_config();
    for (std::uint64_t seed : {11, 12, 13}) {
        Rng rng(seed);
        ParameterStore store;
        const auto params = CoAttentionCellParams::create(store, "ican", cfg, rng);
        const Tensor hv = random_tensor({cfg.d_v, cfg.positions}, rng, -1, 1, true);
        const Tensor ha = random_tensor({cfg.d_a, cfg.slots}, rng, -1, 1, true);
        const Tensor w = random_tensor({cfg.o_pred}, rng);
        std::vector<Tensor> leaves{hv, ha};
        for (auto& p : store.all()) leaves.push_back(p.tensor);
        const auto res =
            finite_difference_check([&] { return sum(mul(ican_forward(hv, ha, params, 2).h_bar, w)); }, leaves);
        CHECK(res.max_rel_error < 1e-4);
        CHECK(res.checked > 100);
    }
}

TEST_CASE("attention export") {
    const auto dir = std::filesystem::temp_directory_path() / "ican_test_attention_export";
    std::filesystem::remove_all(dir);
    AttentionRecord rec;
    for (int l = 0; l < 3; ++l) {
        rec.visual.push_back(std::vector<double>(16, 1.0 / 16));
        rec.attribute.push_back({0.0, 1.0, 0.0});
    }
    const auto files = export_attention(rec, 4, {"size", "metal", "month"}, dir);
    CHECK(files.size() == 5);

    const std::string pgm = slurp(dir / "sample4_visual_cell0.pgm");
    const std::string header = "P5\n4 4\n255\n";
    REQUIRE(pgm.size() == header.size() + 16);
    CHECK(pgm.substr(0, header.size()) == header);
    for (std::size_t i = header.size(); i < pgm.size(); ++i) CHECK(pgm[i] == pgm[header.size()]);

    std::istringstream attrs(slurp(dir / "sample4_attributes.csv"));
    std::string line;
    std::getline(attrs, line);
    CHECK(line == "cell_index,slot_index,slot_name,weight");
    int rows = 0, ones = 0;
    while (std::getline(attrs, line)) {
        ++rows;
        if (line.ends_with(",1")) ++ones;
    }
    CHECK(rows == 9);
    CHECK(ones == 3);

    std::istringstream vis(slurp(dir / "sample4_visual.csv"));
    std::getline(vis, line);
    rows = 0;
    std::set<std::string> cells;
    while (std::getline(vis, line)) {
        ++rows;
        cells.insert(line.substr(0, line.find(',')));
    }
    CHECK(rows == 48);
    CHECK(cells.size() == 3);

    // Min-max scaling spans the full range.
    std::vector<double> ramp(9);
    std::iota(ramp.begin(), ramp.end(), 0.0);
    write_pgm(dir / "ramp.pgm", ramp, 3);
    const std::string r = slurp(dir / "ramp.pgm");
    CHECK(static_cast<unsigned char>(r[r.size() - 9]) == 0);
    CHECK(static_cast<unsigned char>(r.back()) == 255);

    rec.visual[0].resize(15, 0.0);
    rec.visual[1].resize(15, 0.0);
    rec.visual[2].resize(15, 0.0);
    CHECK(export_attention(rec, 5, {"a", "b", "c"}, dir).size() == 2);
    CHECK_THROWS(export_attention(rec, 5, {"a"}, dir));
    std::filesystem::remove_all(dir);
}
