#include "tmvit/flops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tmvit {

std::uint64_t attention_macs(int tokens, int dim) {
    auto n = static_cast<std::uint64_t>(tokens);
    auto d = static_cast<std::uint64_t>(dim);
    return 4 * n * d * d + 2 * n * n * d;
}

std::uint64_t ffn_macs(int tokens, int dim, int ffn_dim) {
    return 2ull * static_cast<std::uint64_t>(tokens) * static_cast<std::uint64_t>(dim) *
           static_cast<std::uint64_t>(ffn_dim);
}

std::uint64_t block_macs(int tokens, int dim, int ffn_dim) {
    return attention_macs(tokens, dim) + ffn_macs(tokens, dim, ffn_dim);
}

std::uint64_t analytic_block_flops(int tokens, int dim) {
    return block_macs(tokens, dim, 4 * dim);
}

namespace {

int post_prune_tokens(int tokens, float keep_rate) {
    int kept = static_cast<int>(std::floor(static_cast<double>(keep_rate) * (tokens - 1)));
    return 1 + std::max(kept, 1);
}

} // namespace

std::vector<int> token_trajectory(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<int> counts;
    counts.reserve(static_cast<std::size_t>(cfg.depth));
    int n = 1 + cfg.high_tokens();
    for (int layer = 1; layer <= cfg.depth; ++layer) {
        if (std::find(cfg.prune_layers.begin(), cfg.prune_layers.end(), layer) !=
            cfg.prune_layers.end())
            n = post_prune_tokens(n, cfg.keep_rate);
        counts.push_back(n);
    }
    return counts;
}

FlopsReport model_flops(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.dim;
    const int f = cfg.ffn_dim();
    const int n_full = 1 + cfg.high_tokens();
    const int n_low = 1 + cfg.low_tokens();
    const int n_short = 1 + cfg.high_tokens() / 4;   // after 2x2 pooling of the high grid

    FlopsReport r;
    r.preset = cfg.name;
    r.keep_rate = cfg.keep_rate;
    r.multiscale = cfg.multiscale;

    r.embed_macs = static_cast<std::uint64_t>(cfg.high_tokens()) *
                   (3ull * cfg.patch_high * cfg.patch_high) * d;
    if (cfg.multiscale)
        r.embed_macs += static_cast<std::uint64_t>(cfg.low_tokens()) *
                        (3ull * cfg.patch_low * cfg.patch_low) * d;

    int n = n_full;
    for (int layer = 1; layer <= cfg.depth; ++layer) {
        BlockFlops b;
        b.layer = layer;
        const bool twin = cfg.multiscale && layer <= cfg.n_downsampled_blocks;
        const bool prune = std::find(cfg.prune_layers.begin(), cfg.prune_layers.end(), layer) !=
                           cfg.prune_layers.end();
        if (twin) {
            // High branch: attention on the pooled sequence, FFN at full
            // length. Low branch: a standard block at its own length.
            b.tokens_attention = n_short;
            b.tokens_ffn = n;
            b.macs = attention_macs(n_short, d) + ffn_macs(n, d, f) + block_macs(n_low, d, f);
        } else if (prune) {
            int m = post_prune_tokens(n, cfg.keep_rate);
            b.tokens_attention = n;
            b.tokens_ffn = m;
            b.macs = attention_macs(n, d) + ffn_macs(m, d, f);
            n = m;
        } else {
            b.tokens_attention = n;
            b.tokens_ffn = n;
            b.macs = block_macs(n, d, f);
        }
        r.block_total += b.macs;
        r.per_block.push_back(b);
        r.token_counts.push_back(n);
    }

    if (cfg.multiscale) {
        // Pointwise convs after upsample and inside the attention module, the
        // two depthwise kernels (5x5 and dilated 7x7), and the 3x3 position
        // encoding conv, all on the high-scale grid.
        auto g = static_cast<std::uint64_t>(cfg.high_tokens());
        auto dd = static_cast<std::uint64_t>(d);
        r.fusion_macs = 2 * g * dd * dd + g * dd * (25 + 49 + 9);
    }
    r.head_macs = static_cast<std::uint64_t>(d) * cfg.num_classes;
    r.total_macs = r.embed_macs + r.block_total + r.fusion_macs + r.head_macs;

    const std::uint64_t dense_blocks =
        static_cast<std::uint64_t>(cfg.depth) * block_macs(n_full, d, f);
    r.reduction_pct =
        100.0 * (1.0 - static_cast<double>(r.block_total) / static_cast<double>(dense_blocks));
    return r;
}

std::string format_text(const FlopsReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "model " << r.preset << "  keep-rate ";
    os.precision(2);
    os << r.keep_rate << "  multiscale " << (r.multiscale ? "on" : "off") << "\n";
    os << "layer  n_attn  n_ffn          macs\n";
    for (const auto& b : r.per_block) {
        os.width(5);
        os << b.layer;
        os.width(8);
        os << b.tokens_attention;
        os.width(7);
        os << b.tokens_ffn;
        os.width(14);
        os << b.macs << "\n";
    }
    os << "embed  " << r.embed_macs << "\n";
    os << "blocks " << r.block_total << "\n";
    os << "fusion " << r.fusion_macs << "\n";
    os << "head   " << r.head_macs << "\n";
    os.precision(4);
    os << "total  " << r.total_macs << " macs, "
       << static_cast<double>(r.total_macs) / 1e9 << " gmacs, "
       << static_cast<double>(2 * r.total_macs) / 1e9 << " gflops\n";
    os.precision(1);
    os << "block reduction " << r.reduction_pct << "% vs dense single-scale stack\n";
    return os.str();
}

std::string format_kv(const FlopsReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os << "preset=" << r.preset << "\n";
    os.precision(4);
    os << "eta=" << r.keep_rate << "\n";
    os << "multiscale=" << (r.multiscale ? 1 : 0) << "\n";
    os << "embed_macs=" << r.embed_macs << "\n";
    os << "block_macs=" << r.block_total << "\n";
    os << "fusion_macs=" << r.fusion_macs << "\n";
    os << "head_macs=" << r.head_macs << "\n";
    os << "total_macs=" << r.total_macs << "\n";
    os << "total_flops=" << 2 * r.total_macs << "\n";
    os << "gmacs=" << static_cast<double>(r.total_macs) / 1e9 << "\n";
    os << "reduction_pct=" << r.reduction_pct << "\n";
    os << "tokens=";
    for (std::size_t i = 0; i < r.token_counts.size(); ++i)
        os << (i ? "," : "") << r.token_counts[i];
    os << "\n";
    for (const auto& b : r.per_block)
        os << "block." << b.layer << "=" << b.tokens_attention << "," << b.tokens_ffn << ","
           << b.macs << "\n";
    return os.str();
}

} // namespace tmvit
