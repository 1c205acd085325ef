#pragma once

#include <optional>
#include <utility>

#include "tmvit/tensor.hpp"

namespace tmvit {

struct AttentionWeights {
    Tensor w_q, w_k, w_v, w_o;   // [D x D]
    Tensor b_q, b_k, b_v, b_o;   // [D]
    int heads = 1;
};

struct BlockWeights {
    AttentionWeights attn;
    Tensor ffn_w1, ffn_b1;   // [D x Dff], [Dff]
    Tensor ffn_w2, ffn_b2;   // [Dff x D], [D]
    Tensor ln1_gamma, ln1_beta;
    Tensor ln2_gamma, ln2_beta;
};

// Attention captured for token scoring: the per-head CLS query row, and
// optionally the full map (only the attention-cross similarity metric needs
// it, so it is opt-in).
struct AttentionRecord {
    Tensor cls_row;                   // [H x N], each head row sums to 1
    std::optional<Tensor> full_map;   // [H x N x N]
};

constexpr float kLayerNormEps = 1e-6f;

// Multi-head self-attention over [N x D] with CLS at row 0. Per-head scaled
// dot-product attention with 1/sqrt(d) scaling, heads concatenated and
// projected by w_o.
std::pair<Tensor, AttentionRecord> mhsa(const Tensor& x, const AttentionWeights& w,
                                        bool record_full_map = false);

// Two-layer feed-forward: Linear -> GeLU -> Linear.
Tensor ffn(const Tensor& x, const BlockWeights& w);

// Pre-norm encoder block: x + mhsa(LN(x)), then + ffn(LN(.)).
std::pair<Tensor, AttentionRecord> encoder_block(const Tensor& x, const BlockWeights& w,
                                                 bool record_full_map = false);

} // namespace tmvit
