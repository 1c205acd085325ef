#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmvit/macs.hpp"
#include "tmvit/multiscale.hpp"
#include "tmvit/pruning.hpp"

namespace tmvit {

struct ModelConfig {
    std::string name = "custom";
    int depth = 12;
    int dim = 384;
    int heads = 6;
    float mlp_ratio = 4.0f;
    std::vector<int> prune_layers;   // 1-based, strictly increasing
    float keep_rate = 1.0f;
    int n_downsampled_blocks = 3;    // dual-branch layers before fusion
    int num_classes = 1000;
    int image_size = 224;
    int patch_high = 16;
    int patch_low = 32;
    SimilarityMetric metric;
    bool multiscale = true;

    int ffn_dim() const;
    Grid grid_high() const { return {image_size / patch_high, image_size / patch_high}; }
    Grid grid_low() const { return {image_size / patch_low, image_size / patch_low}; }
    int high_tokens() const { return grid_high().area(); }
    int low_tokens() const { return grid_low().area(); }

    // Throws ConfigError / ParameterError on an inconsistent setup.
    void validate() const;
};

// Named presets: "deit-t", "deit-s", "deit-b", "lvvit-s".
ModelConfig preset(std::string_view name);
const std::vector<std::string>& preset_names();

struct ModelParams {
    EmbedWeights embed;
    std::vector<BlockWeights> blocks;
    FusionWeights fusion;             // tensors stay empty for single-scale params
    Tensor final_ln_gamma, final_ln_beta;
    Tensor head_w;   // [D x num_classes]
    Tensor head_b;   // [num_classes]
};

// Zero-filled parameters with every tensor the config requires, correctly
// shaped. Loaders fill them; random_init draws into them.
ModelParams allocate_params(const ModelConfig& cfg);

// Deterministic seeded initialization: truncated normal (std 0.02, cut at 2
// std) for projections and embeddings, zeros for biases, ones/zeros for norms.
ModelParams random_init(const ModelConfig& cfg, std::uint64_t seed);

std::size_t param_count(const ModelParams& p);

// Canonical name -> tensor listing in a fixed order; drives the weight file
// and shape validation. The const overload skips empty (absent) tensors.
std::vector<std::pair<std::string, const Tensor*>> named_tensors(const ModelParams& p);
std::vector<std::pair<std::string, Tensor*>> named_tensors_mut(ModelParams& p);

// Names required for a config, with their expected shapes.
std::vector<std::pair<std::string, std::vector<int>>> required_tensors(const ModelConfig& cfg);

// Throws ConfigError naming the first offending tensor.
void validate_params(const ModelParams& p, const ModelConfig& cfg);

struct PruneEvent {
    int layer = 0;   // 1-based layer the event fired in
    PruneOutcome outcome;
};

struct ForwardTrace {
    std::vector<PruneEvent> prune_events;
    std::vector<int> token_counts;             // sequence length after each layer
    Tensor logits;                             // [num_classes]
    std::vector<PatchGroup> final_provenance;  // partition of the original patches
    int patch_grid = 14;                       // side of the high-scale patch grid
};

// Full inference pass. With multiscale enabled: dual embedding, twin-branch
// blocks (shared weights; the high branch uses downsampled attention), fusion,
// then standard blocks. At each prune layer the block's own attention scores
// the tokens and the merge runs between its attention and FFN sublayers.
// Passing a counter tallies MACs by section and per block.
ForwardTrace forward(const Tensor& image, const ModelParams& params, const ModelConfig& cfg,
                     MacCounter* counter = nullptr);

} // namespace tmvit
