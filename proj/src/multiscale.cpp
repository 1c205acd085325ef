#include "tmvit/multiscale.hpp"

#include <cstring>

#include "tmvit/errors.hpp"

namespace tmvit {

Tensor tokens_to_grid(const Tensor& spatial_tokens, Grid g) {
    if (spatial_tokens.rank() != 2 || spatial_tokens.dim(0) != g.area()) {
        throw DimensionError("tokens_to_grid: " + spatial_tokens.shape_str() +
                             " does not cover a " + std::to_string(g.h) + "x" +
                             std::to_string(g.w) + " grid");
    }
    const int d = spatial_tokens.dim(1);
    Tensor grid({d, g.h, g.w});
    for (int y = 0; y < g.h; ++y) {
        for (int x = 0; x < g.w; ++x) {
            const int t = y * g.w + x;
            for (int c = 0; c < d; ++c) {
                grid(c, y, x) = spatial_tokens(t, c);
            }
        }
    }
    return grid;
}

Tensor grid_to_tokens(const Tensor& grid) {
    if (grid.rank() != 3) {
        throw DimensionError("grid_to_tokens: expected [D x h x w], got " + grid.shape_str());
    }
    const int d = grid.dim(0), h = grid.dim(1), w = grid.dim(2);
    Tensor tokens({h * w, d});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int t = y * w + x;
            for (int c = 0; c < d; ++c) {
                tokens(t, c) = grid(c, y, x);
            }
        }
    }
    return tokens;
}

Tensor embed_patches(const Tensor& image, const PatchEmbedWeights& w) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("embed_patches: expected [3 x H x W] image, got " +
                             image.shape_str());
    }
    const int p = w.patch;
    const int h = image.dim(1), iw = image.dim(2);
    if (p < 1 || h % p != 0 || iw % p != 0) {
        throw DimensionError("embed_patches: patch size " + std::to_string(p) +
                             " does not divide image " + image.shape_str());
    }
    const int gh = h / p, gw = iw / p;
    const int flat = 3 * p * p;
    if (w.proj.rank() != 2 || w.proj.dim(0) != flat) {
        throw DimensionError("embed_patches: projection " + w.proj.shape_str() +
                             " does not match flattened patch length " + std::to_string(flat));
    }

    // im2col: one row per patch, channel-major within a patch
    Tensor cols({gh * gw, flat});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            float* dst = cols.data() + static_cast<std::size_t>(py * gw + px) * flat;
            int t = 0;
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < p; ++y) {
                    for (int x = 0; x < p; ++x) {
                        dst[t++] = image(c, py * p + y, px * p + x);
                    }
                }
            }
        }
    }
    return linear(cols, w.proj, w.bias);
}

Tensor embed_single(const Tensor& image, const PatchEmbedWeights& w, const Tensor& cls,
                    const Tensor& pos) {
    const Tensor patches = embed_patches(image, w);
    const int d = patches.dim(1);
    if (cls.rank() != 1 || cls.dim(0) != d) {
        throw DimensionError("embed_single: cls " + cls.shape_str() + " does not match dim " +
                             std::to_string(d));
    }
    Tensor seq = concat_rows(Tensor({1, d}, std::vector<float>(cls.data(), cls.data() + d)),
                             patches);
    if (!pos.same_shape(seq)) {
        throw DimensionError("embed_single: position table " + pos.shape_str() +
                             " does not match sequence " + seq.shape_str());
    }
    return add(seq, pos);
}

DualScaleState embed_dual(const Tensor& image, const EmbedWeights& w) {
    DualScaleState st;
    st.high = embed_single(image, w.patch_high, w.cls_high, w.pos_high);
    st.low = embed_single(image, w.patch_low, w.cls_low, w.pos_low);
    st.grid_high = {image.dim(1) / w.patch_high.patch, image.dim(2) / w.patch_high.patch};
    st.grid_low = {image.dim(1) / w.patch_low.patch, image.dim(2) / w.patch_low.patch};
    return st;
}

Tensor fuse_scales(const DualScaleState& state, const FusionWeights& w) {
    const Grid gh = state.grid_high, gl = state.grid_low;
    if (gh.h != 2 * gl.h || gh.w != 2 * gl.w) {
        throw DimensionError("fuse_scales: high grid must be twice the low grid per side");
    }
    if (state.high.rank() != 2 || state.high.dim(0) != 1 + gh.area() ||
        state.low.rank() != 2 || state.low.dim(0) != 1 + gl.area()) {
        throw DimensionError("fuse_scales: sequences " + state.high.shape_str() + "/" +
                             state.low.shape_str() + " do not match grids");
    }

    const Tensor low_grid = tokens_to_grid(drop_row0(state.low), gl);
    Tensor up = nearest_upsample(low_grid, 2);
    up = conv2d_pointwise(up, w.up_pw);

    // gated large-kernel transform: pw(dwd7(dw5(x))) * x
    Tensor attn = conv2d_depthwise(up, w.lka_dw5, 1);
    attn = conv2d_depthwise(attn, w.lka_dwd7, 3);
    attn = conv2d_pointwise(attn, w.lka_pw);
    const Tensor lka_out = mul(attn, up);

    Tensor fused = add(tokens_to_grid(drop_row0(state.high), gh), lka_out);
    fused = add(fused, conv2d_depthwise(fused, w.peg_dw3, 1));

    const Tensor cls = add(row(state.high, 0), row(state.low, 0));
    return concat_rows(cls, grid_to_tokens(fused));
}

Tensor downsampled_mhsa_block(const Tensor& x, const BlockWeights& w, Grid grid) {
    if (x.rank() != 2 || x.dim(0) != 1 + grid.area()) {
        throw DimensionError("downsampled_mhsa_block: sequence " + x.shape_str() +
                             " does not match grid " + std::to_string(grid.h) + "x" +
                             std::to_string(grid.w));
    }
    if (grid.h % 2 != 0 || grid.w % 2 != 0) {
        throw DimensionError("downsampled_mhsa_block: grid sides must be even");
    }

    const Tensor pooled = avgpool2d(tokens_to_grid(drop_row0(x), grid), 2);
    const Tensor short_seq = concat_rows(row(x, 0), grid_to_tokens(pooled));

    auto [attn_out, rec] =
        mhsa(layernorm(short_seq, w.ln1_gamma, w.ln1_beta, kLayerNormEps), w.attn);

    const Grid half{grid.h / 2, grid.w / 2};
    const Tensor up = nearest_upsample(tokens_to_grid(drop_row0(attn_out), half), 2);
    const Tensor y = add(x, concat_rows(row(attn_out, 0), grid_to_tokens(up)));

    return add(y, ffn(layernorm(y, w.ln2_gamma, w.ln2_beta, kLayerNormEps), w));
}

} // namespace tmvit
