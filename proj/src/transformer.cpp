#include "tmvit/transformer.hpp"

#include <cmath>
#include <cstring>

#include "tmvit/errors.hpp"

namespace tmvit {

namespace {

void check_attention_shapes(const Tensor& x, const AttentionWeights& w) {
    if (x.rank() != 2) {
        throw DimensionError("mhsa: input must be [N x D], got " + x.shape_str());
    }
    const int n = x.dim(0), d_model = x.dim(1);
    if (n < 2) {
        throw DimensionError("mhsa: need at least CLS plus one token, got " + x.shape_str());
    }
    for (const Tensor* t : {&w.w_q, &w.w_k, &w.w_v, &w.w_o}) {
        if (t->rank() != 2 || t->dim(0) != d_model || t->dim(1) != d_model) {
            throw DimensionError("mhsa: projection weight " + t->shape_str() +
                                 " does not match input " + x.shape_str());
        }
    }
    for (const Tensor* t : {&w.b_q, &w.b_k, &w.b_v, &w.b_o}) {
        if (t->rank() != 1 || t->dim(0) != d_model) {
            throw DimensionError("mhsa: projection bias " + t->shape_str() +
                                 " does not match input " + x.shape_str());
        }
    }
    if (w.heads < 1 || d_model % w.heads != 0) {
        throw DimensionError("mhsa: head count " + std::to_string(w.heads) +
                             " must divide embedding dim " + std::to_string(d_model));
    }
}

} // namespace

std::pair<Tensor, AttentionRecord> mhsa(const Tensor& x, const AttentionWeights& w,
                                        bool record_full_map) {
    check_attention_shapes(x, w);
    const int n = x.dim(0);
    const int d_model = x.dim(1);
    const int heads = w.heads;
    const int d_head = d_model / heads;
    const float scaling = 1.0f / std::sqrt(static_cast<float>(d_head));

    const Tensor q = linear(x, w.w_q, w.b_q);
    const Tensor k = linear(x, w.w_k, w.b_k);
    const Tensor v = linear(x, w.w_v, w.b_v);

    AttentionRecord rec;
    rec.cls_row = Tensor({heads, n});
    if (record_full_map) {
        rec.full_map = Tensor({heads, n, n});
    }

    Tensor concat({n, d_model});
    for (int h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * d_head, (h + 1) * d_head);
        const Tensor kh = slice_cols(k, h * d_head, (h + 1) * d_head);
        const Tensor vh = slice_cols(v, h * d_head, (h + 1) * d_head);

        Tensor scores = matmul(qh, transpose(kh));
        scores = scale(scores, scaling);
        const Tensor attn = softmax_rows(scores);   // [N x N]

        for (int j = 0; j < n; ++j) {
            rec.cls_row(h, j) = attn(0, j);
        }
        if (rec.full_map) {
            std::memcpy(rec.full_map->data() + static_cast<std::size_t>(h) * n * n,
                        attn.data(), static_cast<std::size_t>(n) * n * sizeof(float));
        }

        const Tensor head_out = matmul(attn, vh);   // [N x d]
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d_head; ++j) {
                concat(i, h * d_head + j) = head_out(i, j);
            }
        }
    }

    return {linear(concat, w.w_o, w.b_o), std::move(rec)};
}

Tensor ffn(const Tensor& x, const BlockWeights& w) {
    if (x.rank() != 2 || w.ffn_w1.rank() != 2 || x.dim(1) != w.ffn_w1.dim(0)) {
        throw DimensionError("ffn: input " + x.shape_str() + " does not match w1 " +
                             w.ffn_w1.shape_str());
    }
    const Tensor hidden = gelu(linear(x, w.ffn_w1, w.ffn_b1));
    return linear(hidden, w.ffn_w2, w.ffn_b2);
}

std::pair<Tensor, AttentionRecord> encoder_block(const Tensor& x, const BlockWeights& w,
                                                 bool record_full_map) {
    auto [attn_out, rec] = mhsa(layernorm(x, w.ln1_gamma, w.ln1_beta, kLayerNormEps), w.attn,
                                record_full_map);
    const Tensor y = add(x, attn_out);
    const Tensor z = add(y, ffn(layernorm(y, w.ln2_gamma, w.ln2_beta, kLayerNormEps), w));
    return {z, std::move(rec)};
}

} // namespace tmvit
