#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tmvit/tensor.hpp"
#include "tmvit/transformer.hpp"

namespace tmvit {

// Head-averaged CLS attention over the current sequence. Index 0 is the CLS
// self-attention entry; the full row sums to 1.
struct ImportanceScores {
    Tensor scores;   // [N]
};

struct TokenSplit {
    std::vector<int> crucial;       // CLS first, then ascending token index
    std::vector<int> non_crucial;   // ascending token index
};

enum class MetricKind { Cosine, L1, L2, AttentionCross, Random };

struct SimilarityMetric {
    MetricKind kind = MetricKind::Cosine;
    std::uint64_t rng_seed = 0;     // consumed only by Random
};

// Accepted names: "cosine" | "l1" | "l2" | "attn" | "random".
SimilarityMetric metric_from_name(std::string_view name);
std::string metric_name(const SimilarityMetric& m);

// Original-patch ids a kept token stands for. The CLS entry stays empty.
using PatchGroup = std::vector<int>;

struct PruneOutcome {
    std::vector<int> crucial_indices;          // CLS always first, no duplicates
    std::map<int, int> merge_assignment;       // non-crucial index -> crucial index
    Tensor merged_tokens;                      // [|crucial| x D]
    std::vector<PatchGroup> group_provenance;  // per kept token, sorted patch ids
};

// Floor applied to importance weights and cosine norms so degenerate all-zero
// inputs cannot produce a zero denominator.
constexpr float kScoreFloor = 1e-12f;

// scores[j] = mean over heads of the CLS attention row.
ImportanceScores importance_scores(const AttentionRecord& rec);

// Keeps the floor(keep_rate * (N-1)) highest-scoring non-CLS tokens (at least
// one), ties broken by lower index. CLS is prepended to the crucial list.
TokenSplit select_topk(const ImportanceScores& scores, float keep_rate);

// Similarity of every non-crucial token against every crucial merge target.
// Rows follow non_crucial order; columns follow crucial order with the CLS
// entry removed (CLS never receives merges). l1/l2 return negated distances so
// argmax semantics hold for every metric; attention-cross reads the
// head-averaged map entry (non-crucial query row, crucial key column) and
// requires a recorded full map.
Tensor similarity_matrix(const Tensor& tokens, const std::vector<int>& crucial,
                         const std::vector<int>& non_crucial, const SimilarityMetric& metric,
                         const Tensor* full_attention = nullptr);

// Fresh provenance for a sequence of n_tokens: CLS empty, token i owns patch
// i-1.
std::vector<PatchGroup> initial_provenance(int n_tokens);

// Assigns each non-crucial token to its most similar crucial token (ties to
// the lower crucial index) and folds it in by importance-weighted averaging:
//   m_j = (w_j*i_j + sum_k w_k*u_k) / (w_j + sum_k w_k)
// Crucial tokens with no assignees pass through bit-exactly.
PruneOutcome merge_tokens(const Tensor& tokens, const ImportanceScores& scores,
                          const std::vector<int>& crucial, const std::vector<int>& non_crucial,
                          const Tensor& sim, const std::vector<PatchGroup>& provenance);

// Cosine warmup for the keep rate:
//   eta(t) = target + (1 - target) * (1 + cos(pi * min(t, T) / T)) / 2
float keep_rate_schedule(float target, int epoch, int total_warmup);

} // namespace tmvit
