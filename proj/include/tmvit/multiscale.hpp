#pragma once

#include "tmvit/tensor.hpp"
#include "tmvit/transformer.hpp"

namespace tmvit {

struct Grid {
    int h = 0;
    int w = 0;
    int area() const { return h * w; }
    bool operator==(const Grid&) const = default;
};

// Two token sequences over the same image: a fine 16px patching and a coarse
// 32px patching, each with its own CLS at row 0.
struct DualScaleState {
    Tensor high;   // [(1+Nh) x D]
    Tensor low;    // [(1+Nl) x D]
    Grid grid_high;
    Grid grid_low;
};

struct PatchEmbedWeights {
    int patch = 16;
    Tensor proj;   // [(3*patch^2) x D]
    Tensor bias;   // [D]
};

struct EmbedWeights {
    PatchEmbedWeights patch_high;   // 16px patches
    PatchEmbedWeights patch_low;    // 32px patches (dual-scale only)
    Tensor cls_high, cls_low;       // [D]
    Tensor pos_high, pos_low;       // [(1+N) x D], CLS position included
};

struct FusionWeights {
    Tensor up_pw;      // [D x D] pointwise conv applied after nearest upsample
    Tensor lka_dw5;    // [D x 5 x 5] depthwise
    Tensor lka_dwd7;   // [D x 7 x 7] depthwise, dilation 3
    Tensor lka_pw;     // [D x D] pointwise
    Tensor peg_dw3;    // [D x 3 x 3] depthwise, added residually
};

// Layout conversions between token rows and channel-major grids.
Tensor tokens_to_grid(const Tensor& spatial_tokens, Grid g);   // [hw x D] -> [D x h x w]
Tensor grid_to_tokens(const Tensor& grid);                     // [D x h x w] -> [hw x D]

// Non-overlapping patch projection of a [3 x H x W] image: one token per
// patch, row-major over the patch grid.
Tensor embed_patches(const Tensor& image, const PatchEmbedWeights& w);

// Single-scale ViT embedding: patches, CLS prepended, positions added.
Tensor embed_single(const Tensor& image, const PatchEmbedWeights& w, const Tensor& cls,
                    const Tensor& pos);

// Both scales embedded with their own CLS and position codes.
DualScaleState embed_dual(const Tensor& image, const EmbedWeights& w);

// Low-to-high fusion: upsample the low grid (nearest x2, pointwise conv),
// transform with the gated large-kernel module, add onto the high grid, then
// inject positions with a residual depthwise conv. Low CLS folds into high
// CLS; output length is always 1+Nh.
Tensor fuse_scales(const DualScaleState& state, const FusionWeights& w);

// Compute-reduced encoder block: attention runs on a 2x2-pooled copy of the
// spatial tokens (CLS untouched), its output is upsampled back and added
// residually; the FFN sublayer runs at full length.
Tensor downsampled_mhsa_block(const Tensor& x, const BlockWeights& w, Grid grid);

} // namespace tmvit
