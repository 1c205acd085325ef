#include "tmvit/selftest.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "tmvit/flops.hpp"
#include "tmvit/macs.hpp"
#include "tmvit/model.hpp"
#include "tmvit/pruning.hpp"
#include "tmvit/tensor.hpp"
#include "tmvit/transformer.hpp"

namespace tmvit {

namespace {

bool near(float a, float b, float tol) { return std::abs(a - b) <= tol; }

} // namespace

int run_selftest(std::ostream& out) {
    struct Check {
        const char* name;
        std::function<bool()> run;
    };

    std::vector<Check> checks;

    checks.push_back({"matmul permutation", [] {
        Tensor a({2, 2}, {1, 2, 3, 4});
        Tensor p({2, 2}, {0, 1, 1, 0});
        Tensor c = matmul(a, p);
        return c(0, 0) == 2 && c(0, 1) == 1 && c(1, 0) == 4 && c(1, 1) == 3;
    }});

    checks.push_back({"softmax uniform and stability", [] {
        Tensor x({2, 2}, {0, 0, 1000, 0});
        Tensor s = softmax_rows(x);
        return near(s(0, 0), 0.5f, 1e-6f) && near(s(1, 0), 1.0f, 1e-6f) &&
               near(s(1, 1), 0.0f, 1e-6f);
    }});

    checks.push_back({"layernorm symmetry", [] {
        Tensor x({1, 2}, {1, 3});
        Tensor g = Tensor::full({2}, 1.0f);
        Tensor b({2});
        Tensor y = layernorm(x, g, b, kLayerNormEps);
        return near(y(0, 0), -1.0f, 1e-3f) && near(y(0, 1), 1.0f, 1e-3f);
    }});

    checks.push_back({"gelu asymptotes", [] {
        Tensor x({1, 2}, {0.0f, 10.0f});
        Tensor y = gelu(x);
        return y(0, 0) == 0.0f && near(y(0, 1), 10.0f, 1e-3f);
    }});

    checks.push_back({"pool upsample round trip", [] {
        Tensor g = Tensor::full({1, 2, 2}, 5.0f);
        Tensor r = nearest_upsample(avgpool2d(g, 2), 2);
        return r.same_shape(g) && r[0] == 5.0f && r[3] == 5.0f;
    }});

    checks.push_back({"topk floor and tie break", [] {
        ImportanceScores s{Tensor({5}, {0.5f, 0.1f, 0.1f, 0.1f, 0.1f})};
        TokenSplit split = select_topk(s, 0.5f);
        return split.crucial == std::vector<int>{0, 1, 2} &&
               split.non_crucial == std::vector<int>{3, 4};
    }});

    checks.push_back({"merge weighted average", [] {
        Tensor tokens({3, 2}, {9, 9, 1, 0, 0, 1});
        ImportanceScores s{Tensor({3}, {0.2f, 0.6f, 0.2f})};
        Tensor sim({1, 1}, {1.0f});
        auto o = merge_tokens(tokens, s, {0, 1}, {2}, sim, initial_provenance(3));
        return near(o.merged_tokens(1, 0), 0.75f, 1e-6f) &&
               near(o.merged_tokens(1, 1), 0.25f, 1e-6f);
    }});

    checks.push_back({"keep rate schedule midpoint", [] {
        return near(keep_rate_schedule(0.7f, 0, 10), 1.0f, 1e-6f) &&
               near(keep_rate_schedule(0.7f, 10, 10), 0.7f, 1e-6f) &&
               near(keep_rate_schedule(0.7f, 5, 10), 0.85f, 1e-6f);
    }});

    checks.push_back({"unit block macs", [] {
        return block_macs(1, 1, 4) == 14 && attention_macs(1, 1) == 6;
    }});

    checks.push_back({"deit-s token trajectory", [] {
        ModelConfig cfg = preset("deit-s");
        cfg.keep_rate = 0.7f;
        auto t = token_trajectory(cfg);
        return t[2] == 197 && t[3] == 138 && t[6] == 96 && t[9] == 67 && t[11] == 67;
    }});

    checks.push_back({"forward determinism", [] {
        ModelConfig cfg = preset("deit-t");
        cfg.depth = 4;
        cfg.dim = 32;
        cfg.heads = 4;
        cfg.image_size = 64;
        cfg.num_classes = 10;
        cfg.prune_layers = {4};
        cfg.keep_rate = 0.7f;
        ModelParams params = random_init(cfg, 11);
        Tensor image = Tensor::full({3, 64, 64}, 0.25f);
        Tensor a = forward(image, params, cfg).logits;
        Tensor b = forward(image, params, cfg).logits;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] != b[i]) return false;
        return a.all_finite();
    }});

    int failures = 0;
    for (const auto& check : checks) {
        bool ok = false;
        std::string error;
        try {
            ok = check.run();
        } catch (const std::exception& e) {
            error = e.what();
        }
        if (ok) {
            out << "ok   " << check.name << "\n";
        } else {
            ++failures;
            out << "FAIL " << check.name;
            if (!error.empty()) out << " (" << error << ")";
            out << "\n";
        }
    }
    out << (failures == 0 ? "selftest passed" : "selftest FAILED") << " (" << checks.size()
        << " checks, " << failures << " failures)\n";
    return failures;
}

} // namespace tmvit
