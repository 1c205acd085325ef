#include "tmvit/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "tmvit/errors.hpp"

namespace tmvit {

SimilarityMetric metric_from_name(std::string_view name) {
    SimilarityMetric m;
    if (name == "cosine") {
        m.kind = MetricKind::Cosine;
    } else if (name == "l1") {
        m.kind = MetricKind::L1;
    } else if (name == "l2") {
        m.kind = MetricKind::L2;
    } else if (name == "attn") {
        m.kind = MetricKind::AttentionCross;
    } else if (name == "random") {
        m.kind = MetricKind::Random;
    } else {
        throw ParameterError("unknown similarity metric '" + std::string(name) +
                             "' (use cosine|l1|l2|attn|random)");
    }
    return m;
}

std::string metric_name(const SimilarityMetric& m) {
    switch (m.kind) {
        case MetricKind::Cosine: return "cosine";
        case MetricKind::L1: return "l1";
        case MetricKind::L2: return "l2";
        case MetricKind::AttentionCross: return "attn";
        case MetricKind::Random: return "random";
    }
    return "cosine";
}

ImportanceScores importance_scores(const AttentionRecord& rec) {
    if (rec.cls_row.rank() != 2) {
        throw DimensionError("importance_scores: cls_row must be [H x N], got " +
                             rec.cls_row.shape_str());
    }
    const int heads = rec.cls_row.dim(0);
    const int n = rec.cls_row.dim(1);
    ImportanceScores out;
    out.scores = Tensor({n});
    const float inv_h = 1.0f / static_cast<float>(heads);
    for (int j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (int h = 0; h < heads; ++h) acc += rec.cls_row(h, j);
        out.scores[static_cast<std::size_t>(j)] = acc * inv_h;
    }
    return out;
}

TokenSplit select_topk(const ImportanceScores& scores, float keep_rate) {
    if (!(keep_rate > 0.0f) || keep_rate > 1.0f) {
        throw ParameterError("keep_rate must be in (0, 1], got " + std::to_string(keep_rate));
    }
    const int n = static_cast<int>(scores.scores.size());
    if (n < 2) {
        throw DimensionError("select_topk: need at least CLS plus one token");
    }
    int k = static_cast<int>(std::floor(static_cast<double>(keep_rate) * (n - 1)));
    k = std::max(k, 1);

    std::vector<int> order(static_cast<std::size_t>(n - 1));
    std::iota(order.begin(), order.end(), 1);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const float sa = scores.scores[static_cast<std::size_t>(a)];
        const float sb = scores.scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;   // equal scores: lower index wins
    });

    std::vector<int> kept(order.begin(), order.begin() + k);
    std::vector<int> rest(order.begin() + k, order.end());
    std::sort(kept.begin(), kept.end());
    std::sort(rest.begin(), rest.end());

    TokenSplit split;
    split.crucial.reserve(static_cast<std::size_t>(k) + 1);
    split.crucial.push_back(0);
    split.crucial.insert(split.crucial.end(), kept.begin(), kept.end());
    split.non_crucial = std::move(rest);
    return split;
}

namespace {

float cosine_sim(const float* u, const float* v, int d) {
    float dot = 0.0f, nu = 0.0f, nv = 0.0f;
    for (int i = 0; i < d; ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    const float den = std::max(std::sqrt(nu), kScoreFloor) * std::max(std::sqrt(nv), kScoreFloor);
    return dot / den;
}

float neg_l1(const float* u, const float* v, int d) {
    float acc = 0.0f;
    for (int i = 0; i < d; ++i) acc += std::fabs(u[i] - v[i]);
    return -acc;
}

float neg_l2(const float* u, const float* v, int d) {
    float acc = 0.0f;
    for (int i = 0; i < d; ++i) {
        const float z = u[i] - v[i];
        acc += z * z;
    }
    return -std::sqrt(acc);
}

} // namespace

Tensor similarity_matrix(const Tensor& tokens, const std::vector<int>& crucial,
                         const std::vector<int>& non_crucial, const SimilarityMetric& metric,
                         const Tensor* full_attention) {
    if (tokens.rank() != 2) {
        throw DimensionError("similarity_matrix: tokens must be [N x D], got " +
                             tokens.shape_str());
    }
    if (crucial.empty() || crucial[0] != 0) {
        throw ParameterError("similarity_matrix: crucial list must start with CLS index 0");
    }
    const int d = tokens.dim(1);
    const int rows = static_cast<int>(non_crucial.size());
    const int cols = static_cast<int>(crucial.size()) - 1;   // CLS excluded as target
    if (cols < 1) {
        throw ParameterError("similarity_matrix: need at least one non-CLS crucial token");
    }
    if (rows == 0) {
        return Tensor{};   // nothing to merge; merge_tokens accepts the empty matrix
    }

    Tensor sim({rows, cols});

    if (metric.kind == MetricKind::Random) {
        std::mt19937_64 rng(metric.rng_seed);
        std::uniform_real_distribution<float> uni(0.0f, 1.0f);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) sim(r, c) = uni(rng);
        }
        return sim;
    }

    if (metric.kind == MetricKind::AttentionCross) {
        if (full_attention == nullptr || full_attention->rank() != 3) {
            throw ConfigError("similarity_matrix: attn metric needs a recorded full attention map");
        }
        const int heads = full_attention->dim(0);
        const int n = full_attention->dim(1);
        if (full_attention->dim(2) != n || n != tokens.dim(0)) {
            throw DimensionError("similarity_matrix: attention map " + full_attention->shape_str() +
                                 " does not match tokens " + tokens.shape_str());
        }
        const float inv_h = 1.0f / static_cast<float>(heads);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                float acc = 0.0f;
                for (int h = 0; h < heads; ++h) {
                    acc += (*full_attention)(h, non_crucial[static_cast<std::size_t>(r)],
                                             crucial[static_cast<std::size_t>(c) + 1]);
                }
                sim(r, c) = acc * inv_h;
            }
        }
        return sim;
    }

    for (int r = 0; r < rows; ++r) {
        const float* u = tokens.data() +
                         static_cast<std::size_t>(non_crucial[static_cast<std::size_t>(r)]) * d;
        for (int c = 0; c < cols; ++c) {
            const float* v = tokens.data() +
                             static_cast<std::size_t>(crucial[static_cast<std::size_t>(c) + 1]) * d;
            switch (metric.kind) {
                case MetricKind::Cosine: sim(r, c) = cosine_sim(u, v, d); break;
                case MetricKind::L1: sim(r, c) = neg_l1(u, v, d); break;
                case MetricKind::L2: sim(r, c) = neg_l2(u, v, d); break;
                default: break;
            }
        }
    }
    return sim;
}

std::vector<PatchGroup> initial_provenance(int n_tokens) {
    if (n_tokens < 1) {
        throw ParameterError("initial_provenance: need at least the CLS token");
    }
    std::vector<PatchGroup> prov(static_cast<std::size_t>(n_tokens));
    for (int i = 1; i < n_tokens; ++i) {
        prov[static_cast<std::size_t>(i)] = {i - 1};
    }
    return prov;
}

PruneOutcome merge_tokens(const Tensor& tokens, const ImportanceScores& scores,
                          const std::vector<int>& crucial, const std::vector<int>& non_crucial,
                          const Tensor& sim, const std::vector<PatchGroup>& provenance) {
    if (tokens.rank() != 2) {
        throw DimensionError("merge_tokens: tokens must be [N x D], got " + tokens.shape_str());
    }
    const int n = tokens.dim(0);
    const int d = tokens.dim(1);
    if (static_cast<int>(scores.scores.size()) != n) {
        throw DimensionError("merge_tokens: scores " + scores.scores.shape_str() +
                             " do not match tokens " + tokens.shape_str());
    }
    if (static_cast<int>(provenance.size()) != n) {
        throw DimensionError("merge_tokens: provenance size " +
                             std::to_string(provenance.size()) + " does not match token count " +
                             std::to_string(n));
    }
    if (crucial.empty() || crucial[0] != 0) {
        throw ParameterError("merge_tokens: crucial list must start with CLS index 0");
    }
    const int n_crucial = static_cast<int>(crucial.size());
    const int n_targets = n_crucial - 1;
    if (!non_crucial.empty()) {
        if (sim.rank() != 2 || sim.dim(0) != static_cast<int>(non_crucial.size()) ||
            sim.dim(1) != n_targets) {
            throw DimensionError("merge_tokens: similarity " + sim.shape_str() +
                                 " does not match index lists");
        }
    }

    PruneOutcome out;
    out.crucial_indices = crucial;
    out.group_provenance.resize(static_cast<std::size_t>(n_crucial));
    for (int j = 0; j < n_crucial; ++j) {
        out.group_provenance[static_cast<std::size_t>(j)] =
            provenance[static_cast<std::size_t>(crucial[static_cast<std::size_t>(j)])];
    }

    // assignment: argmax similarity, ties to the lower crucial index
    std::vector<std::vector<int>> assignees(static_cast<std::size_t>(n_crucial));
    for (std::size_t r = 0; r < non_crucial.size(); ++r) {
        int best = 0;
        float best_sim = sim(static_cast<int>(r), 0);
        for (int c = 1; c < n_targets; ++c) {
            const float s = sim(static_cast<int>(r), c);
            if (s > best_sim) {
                best_sim = s;
                best = c;
            }
        }
        const int target = best + 1;   // skip CLS slot
        out.merge_assignment[non_crucial[r]] = crucial[static_cast<std::size_t>(target)];
        assignees[static_cast<std::size_t>(target)].push_back(non_crucial[r]);
    }

    out.merged_tokens = Tensor({n_crucial, d});
    for (int j = 0; j < n_crucial; ++j) {
        const int src = crucial[static_cast<std::size_t>(j)];
        const float* base = tokens.data() + static_cast<std::size_t>(src) * d;
        float* dst = out.merged_tokens.data() + static_cast<std::size_t>(j) * d;
        const auto& group = assignees[static_cast<std::size_t>(j)];
        if (group.empty()) {
            // no assignees: pass through bit-exactly (CLS always lands here)
            std::copy(base, base + d, dst);
            continue;
        }
        const float wj = std::max(scores.scores[static_cast<std::size_t>(src)], kScoreFloor);
        float wsum = wj;
        for (int t = 0; t < d; ++t) dst[t] = wj * base[t];
        for (int u : group) {
            const float wk = std::max(scores.scores[static_cast<std::size_t>(u)], kScoreFloor);
            const float* up = tokens.data() + static_cast<std::size_t>(u) * d;
            for (int t = 0; t < d; ++t) dst[t] += wk * up[t];
            wsum += wk;

            auto& dst_prov = out.group_provenance[static_cast<std::size_t>(j)];
            const auto& src_prov = provenance[static_cast<std::size_t>(u)];
            dst_prov.insert(dst_prov.end(), src_prov.begin(), src_prov.end());
        }
        const float inv = 1.0f / wsum;
        for (int t = 0; t < d; ++t) dst[t] *= inv;
        std::sort(out.group_provenance[static_cast<std::size_t>(j)].begin(),
                  out.group_provenance[static_cast<std::size_t>(j)].end());
    }

    return out;
}

float keep_rate_schedule(float target, int epoch, int total_warmup) {
    if (!(target > 0.0f) || target > 1.0f) {
        throw ParameterError("keep_rate_schedule: target must be in (0, 1], got " +
                             std::to_string(target));
    }
    if (total_warmup < 1) {
        throw ParameterError("keep_rate_schedule: total_warmup must be >= 1");
    }
    const int t = std::clamp(epoch, 0, total_warmup);
    const double phase = static_cast<double>(t) / static_cast<double>(total_warmup);
    const double eta = target + (1.0 - target) * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
    return static_cast<float>(eta);
}

} // namespace tmvit
