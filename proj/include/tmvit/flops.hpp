#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmvit/model.hpp"

namespace tmvit {

// One multiply-accumulate equals one MAC; reported "G" figures are GMACs,
// i.e. total_flops = 2 * total_macs.
std::uint64_t attention_macs(int tokens, int dim);                // 4nd^2 + 2n^2 d
std::uint64_t ffn_macs(int tokens, int dim, int ffn_dim);         // 2ndf
std::uint64_t block_macs(int tokens, int dim, int ffn_dim);

// Encoder block at MLP ratio 4: 12nd^2 + 2n^2 d MACs.
std::uint64_t analytic_block_flops(int tokens, int dim);

// Sequence length after each layer under the config's keep-rate schedule:
// a prune layer maps n to 1 + max(1, floor(keep_rate * (n - 1))).
std::vector<int> token_trajectory(const ModelConfig& cfg);

struct BlockFlops {
    int layer = 0;            // 1-based
    int tokens_attention = 0; // sequence length the attention sublayer sees
    int tokens_ffn = 0;       // sequence length the FFN sublayer sees
    std::uint64_t macs = 0;   // both branches on dual-scale layers
};

struct FlopsReport {
    std::string preset;
    float keep_rate = 1.0f;
    bool multiscale = true;
    std::uint64_t embed_macs = 0;
    std::uint64_t block_total = 0;
    std::uint64_t fusion_macs = 0;
    std::uint64_t head_macs = 0;
    std::uint64_t total_macs = 0;
    double reduction_pct = 0.0;   // block MACs saved vs the dense single-scale stack
    std::vector<BlockFlops> per_block;
    std::vector<int> token_counts;
};

// Closed-form count of every matmul and convolution the forward pass runs.
// It matches the instrumented counter MAC for MAC.
FlopsReport model_flops(const ModelConfig& cfg);

std::string format_text(const FlopsReport& r);
std::string format_kv(const FlopsReport& r);

} // namespace tmvit
