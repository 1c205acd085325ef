#include "tmvit/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>

#include "tmvit/errors.hpp"
#include "tmvit/transformer.hpp"

namespace tmvit {

int ModelConfig::ffn_dim() const {
    return static_cast<int>(std::lround(static_cast<double>(dim) * mlp_ratio));
}

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("depth must be at least 1");
    if (dim < 1) throw ConfigError("dim must be positive");
    if (heads < 1) throw ConfigError("heads must be positive");
    if (dim % heads != 0)
        throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " +
                          std::to_string(heads));
    if (!(mlp_ratio > 0.0f) || ffn_dim() < 1) throw ConfigError("mlp_ratio must be positive");
    if (num_classes < 1) throw ConfigError("num_classes must be positive");
    if (!(keep_rate > 0.0f) || keep_rate > 1.0f)
        throw ParameterError("keep_rate must lie in (0, 1]");
    if (image_size < 1 || patch_high < 1 || patch_low < 1)
        throw ConfigError("image_size and patch sizes must be positive");
    if (image_size % patch_high != 0 || image_size % patch_low != 0)
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " is not divisible by both patch sizes");
    if (multiscale) {
        if (patch_low != 2 * patch_high)
            throw ConfigError("dual-scale runs need patch_low == 2 * patch_high");
        if (grid_high().h % 2 != 0 || grid_high().w % 2 != 0)
            throw ConfigError("high-scale grid must have even sides for 2x pooling");
        if (n_downsampled_blocks < 1 || n_downsampled_blocks >= depth)
            throw ConfigError("n_downsampled_blocks must lie in [1, depth)");
    }
    if (n_downsampled_blocks < 0)
        throw ConfigError("n_downsampled_blocks must be non-negative");
    // Merging needs a block whose attention can score the tokens, so prune
    // layers must sit strictly after the downsampled prefix (after fusion in
    // dual-scale runs).
    int prev = n_downsampled_blocks;
    for (int layer : prune_layers) {
        if (layer <= prev || layer > depth)
            throw ConfigError("prune layer " + std::to_string(layer) +
                              " must be strictly increasing, after any fusion point, and at most "
                              "depth " + std::to_string(depth));
        prev = layer;
    }
}

ModelConfig preset(std::string_view name) {
    ModelConfig c;
    c.name = std::string(name);
    if (name == "deit-t") {
        c.depth = 12; c.dim = 192; c.heads = 3; c.prune_layers = {4, 7, 10};
    } else if (name == "deit-s") {
        c.depth = 12; c.dim = 384; c.heads = 6; c.prune_layers = {4, 7, 10};
    } else if (name == "deit-b") {
        c.depth = 12; c.dim = 768; c.heads = 12; c.prune_layers = {4, 7, 10};
    } else if (name == "lvvit-s") {
        c.depth = 16; c.dim = 384; c.heads = 6; c.prune_layers = {5, 9, 13};
    } else {
        throw ConfigError("unknown preset: " + std::string(name));
    }
    return c;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"deit-t", "deit-s", "deit-b", "lvvit-s"};
    return names;
}

namespace {

// Box-Muller over explicit 53-bit uniforms so the stream does not depend on
// the standard library's distribution implementations. Samples with |z| > 2
// are redrawn.
class TruncNormal {
public:
    explicit TruncNormal(std::uint64_t seed) : rng_(seed) {}

    float operator()() {
        for (;;) {
            double u1 = uniform01();
            double u2 = uniform01();
            double z = std::sqrt(-2.0 * std::log(1.0 - u1)) *
                       std::cos(2.0 * std::numbers::pi * u2);
            if (std::abs(z) <= 2.0) return static_cast<float>(0.02 * z);
        }
    }

private:
    double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 rng_;
};

std::string last_component(const std::string& name) {
    auto pos = name.rfind('.');
    return pos == std::string::npos ? name : name.substr(pos + 1);
}

bool is_zero_init(const std::string& name) {
    static const std::vector<std::string> zero = {"beta", "bias", "b",   "b1",
                                                  "b2",   "b_q",  "b_k", "b_v", "b_o"};
    return std::find(zero.begin(), zero.end(), last_component(name)) != zero.end();
}

bool is_one_init(const std::string& name) { return last_component(name) == "gamma"; }

template <typename Params, typename TensorPtr>
void collect_named(Params& p, std::vector<std::pair<std::string, TensorPtr>>& out) {
    auto push = [&out](const std::string& name, TensorPtr t) {
        if (!t->empty()) out.emplace_back(name, t);
    };
    push("embed.patch_high.proj", &p.embed.patch_high.proj);
    push("embed.patch_high.bias", &p.embed.patch_high.bias);
    push("embed.cls_high", &p.embed.cls_high);
    push("embed.pos_high", &p.embed.pos_high);
    push("embed.patch_low.proj", &p.embed.patch_low.proj);
    push("embed.patch_low.bias", &p.embed.patch_low.bias);
    push("embed.cls_low", &p.embed.cls_low);
    push("embed.pos_low", &p.embed.pos_low);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        std::string base = "block." + std::to_string(i) + ".";
        push(base + "attn.w_q", &b.attn.w_q);
        push(base + "attn.b_q", &b.attn.b_q);
        push(base + "attn.w_k", &b.attn.w_k);
        push(base + "attn.b_k", &b.attn.b_k);
        push(base + "attn.w_v", &b.attn.w_v);
        push(base + "attn.b_v", &b.attn.b_v);
        push(base + "attn.w_o", &b.attn.w_o);
        push(base + "attn.b_o", &b.attn.b_o);
        push(base + "ln1.gamma", &b.ln1_gamma);
        push(base + "ln1.beta", &b.ln1_beta);
        push(base + "ffn.w1", &b.ffn_w1);
        push(base + "ffn.b1", &b.ffn_b1);
        push(base + "ffn.w2", &b.ffn_w2);
        push(base + "ffn.b2", &b.ffn_b2);
        push(base + "ln2.gamma", &b.ln2_gamma);
        push(base + "ln2.beta", &b.ln2_beta);
    }
    push("fusion.up_pw", &p.fusion.up_pw);
    push("fusion.lka_dw5", &p.fusion.lka_dw5);
    push("fusion.lka_dwd7", &p.fusion.lka_dwd7);
    push("fusion.lka_pw", &p.fusion.lka_pw);
    push("fusion.peg_dw3", &p.fusion.peg_dw3);
    push("final_ln.gamma", &p.final_ln_gamma);
    push("final_ln.beta", &p.final_ln_beta);
    push("head.w", &p.head_w);
    push("head.b", &p.head_b);
}

} // namespace

std::vector<std::pair<std::string, const Tensor*>> named_tensors(const ModelParams& p) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    collect_named<const ModelParams, const Tensor*>(p, out);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> named_tensors_mut(ModelParams& p) {
    std::vector<std::pair<std::string, Tensor*>> out;
    collect_named<ModelParams, Tensor*>(p, out);
    return out;
}

std::vector<std::pair<std::string, std::vector<int>>> required_tensors(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.dim;
    const int f = cfg.ffn_dim();
    std::vector<std::pair<std::string, std::vector<int>>> out;
    out.emplace_back("embed.patch_high.proj",
                     std::vector<int>{3 * cfg.patch_high * cfg.patch_high, d});
    out.emplace_back("embed.patch_high.bias", std::vector<int>{d});
    out.emplace_back("embed.cls_high", std::vector<int>{d});
    out.emplace_back("embed.pos_high", std::vector<int>{1 + cfg.high_tokens(), d});
    if (cfg.multiscale) {
        out.emplace_back("embed.patch_low.proj",
                         std::vector<int>{3 * cfg.patch_low * cfg.patch_low, d});
        out.emplace_back("embed.patch_low.bias", std::vector<int>{d});
        out.emplace_back("embed.cls_low", std::vector<int>{d});
        out.emplace_back("embed.pos_low", std::vector<int>{1 + cfg.low_tokens(), d});
    }
    for (int i = 0; i < cfg.depth; ++i) {
        std::string base = "block." + std::to_string(i) + ".";
        for (const char* name : {"q", "k", "v", "o"}) {
            out.emplace_back(base + "attn.w_" + name, std::vector<int>{d, d});
            out.emplace_back(base + "attn.b_" + name, std::vector<int>{d});
        }
        out.emplace_back(base + "ln1.gamma", std::vector<int>{d});
        out.emplace_back(base + "ln1.beta", std::vector<int>{d});
        out.emplace_back(base + "ffn.w1", std::vector<int>{d, f});
        out.emplace_back(base + "ffn.b1", std::vector<int>{f});
        out.emplace_back(base + "ffn.w2", std::vector<int>{f, d});
        out.emplace_back(base + "ffn.b2", std::vector<int>{d});
        out.emplace_back(base + "ln2.gamma", std::vector<int>{d});
        out.emplace_back(base + "ln2.beta", std::vector<int>{d});
    }
    if (cfg.multiscale) {
        out.emplace_back("fusion.up_pw", std::vector<int>{d, d});
        out.emplace_back("fusion.lka_dw5", std::vector<int>{d, 5, 5});
        out.emplace_back("fusion.lka_dwd7", std::vector<int>{d, 7, 7});
        out.emplace_back("fusion.lka_pw", std::vector<int>{d, d});
        out.emplace_back("fusion.peg_dw3", std::vector<int>{d, 3, 3});
    }
    out.emplace_back("final_ln.gamma", std::vector<int>{d});
    out.emplace_back("final_ln.beta", std::vector<int>{d});
    out.emplace_back("head.w", std::vector<int>{d, cfg.num_classes});
    out.emplace_back("head.b", std::vector<int>{cfg.num_classes});
    return out;
}

ModelParams allocate_params(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.dim;
    const int f = cfg.ffn_dim();

    ModelParams p;
    p.embed.patch_high.patch = cfg.patch_high;
    p.embed.patch_high.proj = Tensor({3 * cfg.patch_high * cfg.patch_high, d});
    p.embed.patch_high.bias = Tensor({d});
    p.embed.cls_high = Tensor({d});
    p.embed.pos_high = Tensor({1 + cfg.high_tokens(), d});
    p.embed.patch_low.patch = cfg.patch_low;
    if (cfg.multiscale) {
        p.embed.patch_low.proj = Tensor({3 * cfg.patch_low * cfg.patch_low, d});
        p.embed.patch_low.bias = Tensor({d});
        p.embed.cls_low = Tensor({d});
        p.embed.pos_low = Tensor({1 + cfg.low_tokens(), d});
        p.fusion.up_pw = Tensor({d, d});
        p.fusion.lka_dw5 = Tensor({d, 5, 5});
        p.fusion.lka_dwd7 = Tensor({d, 7, 7});
        p.fusion.lka_pw = Tensor({d, d});
        p.fusion.peg_dw3 = Tensor({d, 3, 3});
    }
    p.blocks.resize(static_cast<std::size_t>(cfg.depth));
    for (auto& b : p.blocks) {
        b.attn.heads = cfg.heads;
        b.attn.w_q = Tensor({d, d});
        b.attn.b_q = Tensor({d});
        b.attn.w_k = Tensor({d, d});
        b.attn.b_k = Tensor({d});
        b.attn.w_v = Tensor({d, d});
        b.attn.b_v = Tensor({d});
        b.attn.w_o = Tensor({d, d});
        b.attn.b_o = Tensor({d});
        b.ln1_gamma = Tensor({d});
        b.ln1_beta = Tensor({d});
        b.ffn_w1 = Tensor({d, f});
        b.ffn_b1 = Tensor({f});
        b.ffn_w2 = Tensor({f, d});
        b.ffn_b2 = Tensor({d});
        b.ln2_gamma = Tensor({d});
        b.ln2_beta = Tensor({d});
    }
    p.final_ln_gamma = Tensor({d});
    p.final_ln_beta = Tensor({d});
    p.head_w = Tensor({d, cfg.num_classes});
    p.head_b = Tensor({cfg.num_classes});
    return p;
}

ModelParams random_init(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = allocate_params(cfg);

    // Fill in canonical name order so a (config, seed) pair always produces
    // the same parameters. Biases start at zero, norm gains at one.
    TruncNormal draw(seed);
    for (auto& [name, t] : named_tensors_mut(p)) {
        if (is_one_init(name)) {
            std::fill(t->data(), t->data() + t->size(), 1.0f);
        } else if (!is_zero_init(name)) {
            for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = draw();
        }
    }
    return p;
}

std::size_t param_count(const ModelParams& p) {
    std::size_t n = 0;
    for (const auto& [name, t] : named_tensors(p)) {
        (void)name;
        n += t->size();
    }
    return n;
}

void validate_params(const ModelParams& p, const ModelConfig& cfg) {
    auto present = named_tensors(p);
    std::map<std::string, const Tensor*> by_name(present.begin(), present.end());
    for (const auto& [name, shape] : required_tensors(cfg)) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("missing tensor: " + name);
        if (it->second->shape() != shape)
            throw ConfigError("tensor " + name + " has shape " + it->second->shape_str() +
                              ", expected " + Tensor(shape).shape_str());
    }
    for (const auto& b : p.blocks)
        if (b.attn.heads != cfg.heads)
            throw ConfigError("block head count does not match config");
}

ForwardTrace forward(const Tensor& image, const ModelParams& params, const ModelConfig& cfg,
                     MacCounter* counter) {
    cfg.validate();
    validate_params(params, cfg);

    std::optional<MacScope> scope;
    if (counter) scope.emplace(*counter);
    auto section = [&](MacSection s) { if (counter) counter->set_section(s); };

    ForwardTrace trace;
    trace.patch_grid = cfg.grid_high().h;

    section(MacSection::Embed);
    Tensor x;
    Tensor x_low;
    if (cfg.multiscale) {
        DualScaleState st = embed_dual(image, params.embed);
        x = std::move(st.high);
        x_low = std::move(st.low);
    } else {
        x = embed_single(image, params.embed.patch_high, params.embed.cls_high,
                         params.embed.pos_high);
    }
    section(MacSection::Other);

    std::vector<PatchGroup> provenance = initial_provenance(x.dim(0));
    const Grid grid_high = cfg.grid_high();
    const Grid grid_low = cfg.grid_low();
    const bool want_full_map = cfg.metric.kind == MetricKind::AttentionCross;

    for (int layer = 1; layer <= cfg.depth; ++layer) {
        const BlockWeights& w = params.blocks[static_cast<std::size_t>(layer - 1)];
        if (counter) counter->begin_block(layer, x.dim(0));

        const bool twin = cfg.multiscale && layer <= cfg.n_downsampled_blocks;
        const bool prune_here = std::find(cfg.prune_layers.begin(), cfg.prune_layers.end(),
                                          layer) != cfg.prune_layers.end();
        if (twin) {
            x = downsampled_mhsa_block(x, w, grid_high);
            x_low = encoder_block(x_low, w).first;
        } else if (prune_here) {
            // The merge runs between the block's attention and FFN sublayers,
            // scored by this block's own CLS attention.
            auto [attn_out, rec] = mhsa(layernorm(x, w.ln1_gamma, w.ln1_beta, kLayerNormEps),
                                        w.attn, want_full_map);
            Tensor y = add(x, attn_out);

            ImportanceScores imp = importance_scores(rec);
            TokenSplit split = select_topk(imp, cfg.keep_rate);
            SimilarityMetric metric = cfg.metric;
            if (metric.kind == MetricKind::Random)
                metric.rng_seed = cfg.metric.rng_seed ^
                                  (static_cast<std::uint64_t>(layer) * 0x9E3779B97F4A7C15ull);
            const Tensor* full = rec.full_map ? &*rec.full_map : nullptr;
            Tensor sim = similarity_matrix(y, split.crucial, split.non_crucial, metric, full);
            PruneOutcome outcome =
                merge_tokens(y, imp, split.crucial, split.non_crucial, sim, provenance);

            provenance = outcome.group_provenance;
            x = outcome.merged_tokens;
            trace.prune_events.push_back({layer, std::move(outcome)});

            x = add(x, ffn(layernorm(x, w.ln2_gamma, w.ln2_beta, kLayerNormEps), w));
        } else {
            x = encoder_block(x, w).first;
        }
        if (counter) counter->end_block();
        trace.token_counts.push_back(x.dim(0));

        if (cfg.multiscale && layer == cfg.n_downsampled_blocks) {
            section(MacSection::Fusion);
            DualScaleState st{std::move(x), std::move(x_low), grid_high, grid_low};
            x = fuse_scales(st, params.fusion);
            x_low = Tensor{};
            section(MacSection::Other);
        }
    }

    section(MacSection::Head);
    Tensor final_norm = layernorm(x, params.final_ln_gamma, params.final_ln_beta, kLayerNormEps);
    Tensor logits = linear(row(final_norm, 0), params.head_w, params.head_b);
    section(MacSection::Other);

    trace.logits = logits.reshape({cfg.num_classes});
    trace.final_provenance = std::move(provenance);
    return trace;
}

} // namespace tmvit
