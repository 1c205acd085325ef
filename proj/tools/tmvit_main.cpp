#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tmvit/errors.hpp"
#include "tmvit/flops.hpp"
#include "tmvit/image_io.hpp"
#include "tmvit/macs.hpp"
#include "tmvit/model.hpp"
#include "tmvit/pruning.hpp"
#include "tmvit/selftest.hpp"
#include "tmvit/viz.hpp"
#include "tmvit/weights_io.hpp"

namespace {

struct CommonOpts {
    std::string preset = "deit-s";
    float keep_rate = 1.0f;
    std::string metric = "cosine";
    std::uint64_t metric_seed = 0;
    bool no_multiscale = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_metric) {
    cmd->add_option("--preset", o.preset, "model preset")
        ->check(CLI::IsMember(tmvit::preset_names()))
        ->required();
    cmd->add_option("--keep-rate", o.keep_rate, "token keep rate in (0, 1]")
        ->check(CLI::Range(1e-9, 1.0));
    cmd->add_flag("--no-multiscale", o.no_multiscale, "single-scale (plain ViT) mode");
    if (with_metric) {
        cmd->add_option("--metric", o.metric, "similarity metric")
            ->check(CLI::IsMember({"cosine", "l1", "l2", "attn", "random"}));
        cmd->add_option("--metric-seed", o.metric_seed, "seed for the random metric");
    }
}

tmvit::ModelConfig make_config(const CommonOpts& o) {
    tmvit::ModelConfig cfg = tmvit::preset(o.preset);
    cfg.keep_rate = o.keep_rate;
    cfg.multiscale = !o.no_multiscale;
    cfg.metric = tmvit::metric_from_name(o.metric);
    cfg.metric.rng_seed = o.metric_seed;
    cfg.validate();
    return cfg;
}

void print_tokens(const std::vector<int>& counts) {
    std::cout << "tokens ";
    for (std::size_t i = 0; i < counts.size(); ++i) std::cout << (i ? "," : "") << counts[i];
    std::cout << "\n";
}

void print_top5(const tmvit::Tensor& logits) {
    std::vector<int> order(logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&logits](int a, int b) { return logits[a] > logits[b]; });
    char line[64];
    for (int i = 0; i < 5 && i < static_cast<int>(order.size()); ++i) {
        std::snprintf(line, sizeof(line), "class %d logit %.6f", order[i],
                      static_cast<double>(logits[static_cast<std::size_t>(order[i])]));
        std::cout << line << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"token-merging vision transformer toolkit"};
    app.require_subcommand(1);

    CommonOpts infer_opts, viz_opts, flops_opts;
    std::string infer_weights, infer_image;
    std::string viz_weights, viz_image, viz_out;
    int viz_cell_px = 16;
    std::uint64_t viz_palette_seed = 0;
    std::string flops_format = "text";
    std::string gen_preset, gen_out;
    std::uint64_t gen_seed = 0;
    bool gen_no_multiscale = false;
    bool infer_show_macs = false;

    CLI::App* infer = app.add_subcommand("infer", "classify one image, printing top-5 logits");
    add_common(infer, infer_opts, true);
    infer->add_option("--weights", infer_weights, "weight file")->required();
    infer->add_option("--image", infer_image, "input image (binary PPM)")->required();
    infer->add_flag("--show-macs", infer_show_macs, "also print the measured MAC total");

    CLI::App* viz = app.add_subcommand("viz", "render the merge trace as one PPM per prune layer");
    add_common(viz, viz_opts, true);
    viz->add_option("--weights", viz_weights, "weight file")->required();
    viz->add_option("--image", viz_image, "input image (binary PPM)")->required();
    viz->add_option("--out", viz_out, "output directory")->required();
    viz->add_option("--cell-px", viz_cell_px, "pixels per patch cell")->check(CLI::Range(1, 256));
    viz->add_option("--palette-seed", viz_palette_seed, "palette shuffle seed");

    CLI::App* flops = app.add_subcommand("flops", "analytic cost report");
    add_common(flops, flops_opts, false);
    flops->add_option("--format", flops_format, "output format")
        ->check(CLI::IsMember({"text", "kv"}));

    CLI::App* gen = app.add_subcommand("gen-weights", "write seeded random weights");
    gen->add_option("--preset", gen_preset, "model preset")
        ->check(CLI::IsMember(tmvit::preset_names()))
        ->required();
    gen->add_option("--seed", gen_seed, "init seed");
    gen->add_flag("--no-multiscale", gen_no_multiscale, "omit dual-scale tensors");
    gen->add_option("--out", gen_out, "output weight file")->required();

    CLI::App* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(infer)) {
            tmvit::ModelConfig cfg = make_config(infer_opts);
            tmvit::ModelParams params = tmvit::load_weights(infer_weights, cfg);
            tmvit::Tensor image = tmvit::load_image_ppm(infer_image, cfg.image_size);
            tmvit::MacCounter counter;
            tmvit::ForwardTrace trace = tmvit::forward(image, params, cfg, &counter);
            print_tokens(trace.token_counts);
            if (infer_show_macs) std::cout << "macs " << counter.total() << "\n";
            print_top5(trace.logits);
        } else if (app.got_subcommand(viz)) {
            tmvit::ModelConfig cfg = make_config(viz_opts);
            tmvit::ModelParams params = tmvit::load_weights(viz_weights, cfg);
            tmvit::Tensor image = tmvit::load_image_ppm(viz_image, cfg.image_size);
            tmvit::ForwardTrace trace = tmvit::forward(image, params, cfg);
            auto files = tmvit::render_merge_trace(trace, viz_out, viz_cell_px, viz_palette_seed);
            for (const auto& f : files) std::cout << "wrote " << f << "\n";
        } else if (app.got_subcommand(flops)) {
            tmvit::ModelConfig cfg = make_config(flops_opts);
            tmvit::FlopsReport report = tmvit::model_flops(cfg);
            std::cout << (flops_format == "kv" ? tmvit::format_kv(report)
                                               : tmvit::format_text(report));
        } else if (app.got_subcommand(gen)) {
            tmvit::ModelConfig cfg = tmvit::preset(gen_preset);
            cfg.multiscale = !gen_no_multiscale;
            tmvit::ModelParams params = tmvit::random_init(cfg, gen_seed);
            tmvit::save_weights(params, gen_out);
            std::cout << "wrote " << gen_out << " (" << tmvit::named_tensors(params).size()
                      << " tensors, " << tmvit::param_count(params) << " parameters)\n";
        } else if (app.got_subcommand(selftest)) {
            return tmvit::run_selftest(std::cout) == 0 ? 0 : 1;
        }
    } catch (const tmvit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
