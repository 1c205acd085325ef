#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "tmvit/errors.hpp"
#include "tmvit/macs.hpp"
#include "tmvit/multiscale.hpp"
#include "tmvit/tensor.hpp"
#include "tmvit/transformer.hpp"

using namespace tmvit;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, float scl = 1.0f) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-scl, scl);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

FusionWeights zero_fusion(int d) {
    FusionWeights w;
    w.up_pw = Tensor({d, d});
    w.lka_dw5 = Tensor({d, 5, 5});
    w.lka_dwd7 = Tensor({d, 7, 7});
    w.lka_pw = Tensor({d, d});
    w.peg_dw3 = Tensor({d, 3, 3});
    return w;
}

FusionWeights random_fusion(int d, std::uint64_t seed) {
    FusionWeights w;
    w.up_pw = random_tensor({d, d}, seed + 1, 0.3f);
    w.lka_dw5 = random_tensor({d, 5, 5}, seed + 2, 0.3f);
    w.lka_dwd7 = random_tensor({d, 7, 7}, seed + 3, 0.3f);
    w.lka_pw = random_tensor({d, d}, seed + 4, 0.3f);
    w.peg_dw3 = random_tensor({d, 3, 3}, seed + 5, 0.3f);
    return w;
}

BlockWeights random_block(int d, int f, int heads, std::uint64_t seed) {
    BlockWeights w;
    w.attn.w_q = random_tensor({d, d}, seed + 1, 0.4f);
    w.attn.w_k = random_tensor({d, d}, seed + 2, 0.4f);
    w.attn.w_v = random_tensor({d, d}, seed + 3, 0.4f);
    w.attn.w_o = random_tensor({d, d}, seed + 4, 0.4f);
    w.attn.b_q = random_tensor({d}, seed + 5, 0.1f);
    w.attn.b_k = random_tensor({d}, seed + 6, 0.1f);
    w.attn.b_v = random_tensor({d}, seed + 7, 0.1f);
    w.attn.b_o = random_tensor({d}, seed + 8, 0.1f);
    w.attn.heads = heads;
    w.ffn_w1 = random_tensor({d, f}, seed + 9, 0.4f);
    w.ffn_b1 = random_tensor({f}, seed + 10, 0.1f);
    w.ffn_w2 = random_tensor({f, d}, seed + 11, 0.4f);
    w.ffn_b2 = random_tensor({d}, seed + 12, 0.1f);
    w.ln1_gamma = Tensor::full({d}, 1.0f);
    w.ln1_beta = Tensor({d});
    w.ln2_gamma = Tensor::full({d}, 1.0f);
    w.ln2_beta = Tensor({d});
    return w;
}

} // namespace

TEST_CASE("token/grid layout round trips") {
    Grid g{3, 4};
    Tensor tokens = random_tensor({12, 5}, 400);
    Tensor grid = tokens_to_grid(tokens, g);
    REQUIRE(grid.shape() == std::vector<int>{5, 3, 4});
    // token r, channel c lands at grid(c, r/w, r%w)
    CHECK(grid(2, 1, 3) == tokens(7, 2));
    Tensor back = grid_to_tokens(grid);
    REQUIRE(back.same_shape(tokens));
    for (std::size_t i = 0; i < tokens.size(); ++i) CHECK(back[i] == tokens[i]);

    CHECK_THROWS_AS(tokens_to_grid(tokens, Grid{3, 5}), DimensionError);
}

TEST_CASE("patch embedding") {
    SUBCASE("shape and constant-image behavior") {
        // constant image with an averaging kernel: every patch token is equal
        const int d = 3, patch = 2, side = 4;
        PatchEmbedWeights w;
        w.patch = patch;
        w.proj = Tensor::full({3 * patch * patch, d}, 1.0f / (3 * patch * patch));
        w.bias = Tensor({d});
        Tensor image = Tensor::full({3, side, side}, 0.25f);
        Tensor tokens = embed_patches(image, w);
        REQUIRE(tokens.shape() == std::vector<int>{4, d});
        for (std::size_t i = 0; i < tokens.size(); ++i)
            CHECK(tokens[i] == doctest::Approx(0.25f).epsilon(1e-6));
    }
    SUBCASE("patch rows are row-major over the patch grid") {
        const int patch = 2, side = 4;
        PatchEmbedWeights w;
        w.patch = patch;
        w.proj = Tensor({3 * patch * patch, 1});
        w.proj(0, 0) = 1.0f;   // reads channel 0, patch-local pixel (0,0)
        w.bias = Tensor({1});
        Tensor image({3, side, side});
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) image(0, y, x) = static_cast<float>(10 * y + x);
        Tensor tokens = embed_patches(image, w);
        REQUIRE(tokens.shape() == std::vector<int>{4, 1});
        CHECK(tokens(0, 0) == 0.0f);    // patch (0,0) origin pixel
        CHECK(tokens(1, 0) == 2.0f);    // patch (0,1)
        CHECK(tokens(2, 0) == 20.0f);   // patch (1,0)
        CHECK(tokens(3, 0) == 22.0f);   // patch (1,1)
    }
    SUBCASE("indivisible image size is rejected") {
        PatchEmbedWeights w;
        w.patch = 3;
        w.proj = Tensor({27, 2});
        w.bias = Tensor({2});
        CHECK_THROWS_AS(embed_patches(Tensor({3, 4, 4}), w), DimensionError);
    }
}

TEST_CASE("dual embedding produces 197 and 50 token sequences at 224px") {
    const int d = 4;
    EmbedWeights w;
    w.patch_high.patch = 16;
    w.patch_high.proj = Tensor({3 * 16 * 16, d});
    w.patch_high.bias = Tensor({d});
    w.patch_low.patch = 32;
    w.patch_low.proj = Tensor({3 * 32 * 32, d});
    w.patch_low.bias = Tensor({d});
    w.cls_high = Tensor({d}, {1.0f, 2.0f, 3.0f, 4.0f});
    w.cls_low = Tensor({d}, {5.0f, 6.0f, 7.0f, 8.0f});
    w.pos_high = Tensor({197, d});
    w.pos_low = Tensor({50, d});

    DualScaleState state = embed_dual(Tensor({3, 224, 224}), w);
    REQUIRE(state.high.shape() == std::vector<int>{197, d});
    REQUIRE(state.low.shape() == std::vector<int>{50, d});
    CHECK(state.grid_high == Grid{14, 14});
    CHECK(state.grid_low == Grid{7, 7});

    // zero image, weights, and positions: rows are zero except each CLS
    for (int j = 0; j < d; ++j) {
        CHECK(state.high(0, j) == w.cls_high[static_cast<std::size_t>(j)]);
        CHECK(state.low(0, j) == w.cls_low[static_cast<std::size_t>(j)]);
        CHECK(state.high(1, j) == 0.0f);
        CHECK(state.low(49, j) == 0.0f);
    }
}

TEST_CASE("embed_single adds CLS and positions") {
    const int d = 2, side = 4;
    PatchEmbedWeights w;
    w.patch = 2;
    w.proj = Tensor({12, d});
    w.bias = Tensor({d}, {0.5f, -0.5f});
    Tensor cls({d}, {9.0f, 9.0f});
    Tensor pos({5, d});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < d; ++j) pos(i, j) = static_cast<float>(i);

    Tensor x = embed_single(Tensor({3, side, side}), w, cls, pos);
    REQUIRE(x.shape() == std::vector<int>{5, d});
    CHECK(x(0, 0) == 9.0f);   // cls + pos row 0 (zero)
    CHECK(x(3, 0) == doctest::Approx(0.5f + 3.0f).epsilon(1e-6));
    CHECK(x(3, 1) == doctest::Approx(-0.5f + 3.0f).epsilon(1e-6));
}

TEST_CASE("fusion identities") {
    const int d = 4;
    Grid gh{4, 4}, gl{2, 2};

    SUBCASE("zero low branch and zero kernels leave the high branch bitwise") {
        DualScaleState state;
        state.high = random_tensor({1 + gh.area(), d}, 401);
        state.low = Tensor({1 + gl.area(), d});
        state.grid_high = gh;
        state.grid_low = gl;
        Tensor fused = fuse_scales(state, zero_fusion(d));
        REQUIRE(fused.same_shape(state.high));
        for (std::size_t i = 0; i < fused.size(); ++i) CHECK(fused[i] == state.high[i]);
    }
    SUBCASE("zero lka pointwise kernel gates the low branch away") {
        // the gating multiply makes LKA output zero, so fused = PEG(high)
        DualScaleState state;
        state.high = random_tensor({1 + gh.area(), d}, 402);
        state.low = random_tensor({1 + gl.area(), d}, 403);
        state.grid_high = gh;
        state.grid_low = gl;
        FusionWeights w = random_fusion(d, 404);
        w.lka_pw = Tensor({d, d});

        Tensor fused = fuse_scales(state, w);
        Tensor high_grid = tokens_to_grid(drop_row0(state.high), gh);
        Tensor peg = add(high_grid, conv2d_depthwise(high_grid, w.peg_dw3));
        Tensor expect = concat_rows(row(state.high, 0), grid_to_tokens(peg));
        // CLS still absorbs the low CLS
        for (int j = 0; j < d; ++j)
            CHECK(fused(0, j) == doctest::Approx(state.high(0, j) + state.low(0, j))
                                     .epsilon(1e-6));
        for (int i = 1; i <= gh.area(); ++i)
            for (int j = 0; j < d; ++j)
                CHECK(fused(i, j) == doctest::Approx(expect(i, j)).epsilon(1e-5));
    }
    SUBCASE("output length tracks the high branch for other grid pairs") {
        DualScaleState state;
        state.grid_high = Grid{6, 6};
        state.grid_low = Grid{3, 3};
        state.high = random_tensor({37, d}, 405);
        state.low = random_tensor({10, d}, 406);
        Tensor fused = fuse_scales(state, random_fusion(d, 407));
        CHECK(fused.shape() == std::vector<int>{37, d});
        CHECK(fused.all_finite());
    }
    SUBCASE("mismatched grids are rejected") {
        DualScaleState state;
        state.grid_high = Grid{4, 4};
        state.grid_low = Grid{3, 3};
        state.high = random_tensor({17, d}, 408);
        state.low = random_tensor({10, d}, 409);
        CHECK_THROWS_AS(fuse_scales(state, random_fusion(d, 410)), DimensionError);
    }
}

TEST_CASE("fusion matches a step-by-step composition") {
    const int d = 3;
    Grid gh{4, 4}, gl{2, 2};
    DualScaleState state;
    state.high = random_tensor({17, d}, 411);
    state.low = random_tensor({5, d}, 412);
    state.grid_high = gh;
    state.grid_low = gl;
    FusionWeights w = random_fusion(d, 413);

    Tensor low_grid = tokens_to_grid(drop_row0(state.low), gl);
    Tensor up = conv2d_pointwise(nearest_upsample(low_grid, 2), w.up_pw);
    Tensor lka = mul(conv2d_pointwise(conv2d_depthwise(conv2d_depthwise(up, w.lka_dw5),
                                                       w.lka_dwd7, 3),
                                      w.lka_pw),
                     up);
    Tensor fused_grid = add(tokens_to_grid(drop_row0(state.high), gh), lka);
    Tensor peg = add(fused_grid, conv2d_depthwise(fused_grid, w.peg_dw3));
    Tensor cls = add(row(state.high, 0), row(state.low, 0));
    Tensor expect = concat_rows(cls, grid_to_tokens(peg));

    Tensor fused = fuse_scales(state, w);
    REQUIRE(fused.same_shape(expect));
    for (std::size_t i = 0; i < fused.size(); ++i)
        CHECK(fused[i] == doctest::Approx(expect[i]).epsilon(1e-5));
}

TEST_CASE("downsampled block") {
    const int d = 8, f = 16;
    Grid grid{4, 4};

    SUBCASE("zero attention weights reduce to the FFN path") {
        BlockWeights w = random_block(d, f, 2, 414);
        w.attn.w_q = Tensor({d, d});
        w.attn.w_k = Tensor({d, d});
        w.attn.w_v = Tensor({d, d});
        w.attn.w_o = Tensor({d, d});
        w.attn.b_q = Tensor({d});
        w.attn.b_k = Tensor({d});
        w.attn.b_v = Tensor({d});
        w.attn.b_o = Tensor({d});
        Tensor x = random_tensor({17, d}, 415);
        Tensor y = downsampled_mhsa_block(x, w, grid);
        Tensor expect = add(x, ffn(layernorm(x, w.ln2_gamma, w.ln2_beta, kLayerNormEps), w));
        REQUIRE(y.same_shape(expect));
        for (std::size_t i = 0; i < y.size(); ++i)
            CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-5));
    }

    SUBCASE("constant field matches a plain short-sequence attention") {
        // constant spatial tokens survive pooling and upsampling unchanged, so
        // the attention path equals mhsa on [cls; constant...] directly
        BlockWeights w = random_block(d, f, 2, 416);
        Tensor x({17, d});
        std::mt19937_64 rng(417);
        std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
        std::vector<float> cls_row(d), field(d);
        for (int j = 0; j < d; ++j) {
            cls_row[static_cast<std::size_t>(j)] = dist(rng);
            field[static_cast<std::size_t>(j)] = dist(rng);
        }
        for (int j = 0; j < d; ++j) {
            x(0, j) = cls_row[static_cast<std::size_t>(j)];
            for (int i = 1; i < 17; ++i) x(i, j) = field[static_cast<std::size_t>(j)];
        }

        Tensor got = downsampled_mhsa_block(x, w, grid);

        Tensor xs({5, d});
        for (int j = 0; j < d; ++j) {
            xs(0, j) = x(0, j);
            for (int i = 1; i < 5; ++i) xs(i, j) = field[static_cast<std::size_t>(j)];
        }
        auto [attn_short, rec] =
            mhsa(layernorm(xs, w.ln1_gamma, w.ln1_beta, kLayerNormEps), w.attn);
        Tensor y({17, d});
        for (int j = 0; j < d; ++j) {
            y(0, j) = x(0, j) + attn_short(0, j);
            for (int i = 1; i < 17; ++i) y(i, j) = x(i, j) + attn_short(1, j);
        }
        Tensor expect = add(y, ffn(layernorm(y, w.ln2_gamma, w.ln2_beta, kLayerNormEps), w));
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-4));
    }

    SUBCASE("odd grid is rejected") {
        BlockWeights w = random_block(d, f, 2, 418);
        CHECK_THROWS_AS(downsampled_mhsa_block(random_tensor({10, d}, 419), w, Grid{3, 3}),
                        DimensionError);
    }

    SUBCASE("attention runs on 50 tokens for a 14x14 grid") {
        // MAC count of the attention path must match the short sequence:
        // pooled attention on n=50 is strictly cheaper than full length 197
        BlockWeights w = random_block(d, f, 2, 420);
        Tensor x = random_tensor({197, d}, 421);

        MacCounter down_counter;
        {
            MacScope scope(down_counter);
            downsampled_mhsa_block(x, w, Grid{14, 14});
        }
        MacCounter full_counter;
        {
            MacScope scope(full_counter);
            auto [y, rec] = encoder_block(x, w);
        }
        CHECK(down_counter.total() > 0);
        CHECK(down_counter.total() < full_counter.total());

        // exact attention-path relation: pooled seq length is 1 + 196/4 = 50
        const std::uint64_t n_short = 50, n_full = 197, dd = d;
        std::uint64_t attn_short = 4 * n_short * dd * dd + 2 * n_short * n_short * dd;
        std::uint64_t attn_full = 4 * n_full * dd * dd + 2 * n_full * n_full * dd;
        std::uint64_t ffn_full = 2 * n_full * dd * (2 * dd);
        CHECK(down_counter.total() == attn_short + ffn_full);
        CHECK(full_counter.total() == attn_full + ffn_full);
    }
}
