// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "vtrim/annealing.hpp"
#include "vtrim/errors.hpp"
#include "vtrim/heredity.hpp"
#include "vtrim/schedule.hpp"

namespace vtrim {

// Analytic op/byte model for the decoder stack. Counts 2 ops per
// multiply-accumulate and covers projections, score/value matmuls and the
// gated MLP; softmax, normalization and embedding lookups are excluded, as
// is the LM head. Pure arithmetic, no engine types involved.
struct CostConfig {
    int num_layers = 32;
    int model_dim = 4096;
    int mlp_dim = 11008;
    int n_visual = 576;
    int n_text = 128;  // system + instruction tokens
    int batch = 1;
    int kv_bytes_per_element = 2;

    void validate() const {
        if (num_layers < 1 || model_dim < 1 || mlp_dim < 1) {
            throw config_error("cost: model dimensions must be positive");
        }
        if (n_visual < 0 || n_text < 0) {
            throw config_error("cost: token counts must be non-negative");
        }
        if (batch < 1 || kv_bytes_per_element < 1) {
            throw config_error("cost: batch and element size must be positive");
        }
    }
};

// One decoder layer over n tokens during prefill.
//   full: 8nd^2 (Q,K,V,O projections) + 4n^2 d (scores + AV) + 6ndm (gated MLP)
//   lazy: the V and O projections, AV only, and the MLP
inline std::int64_t layer_flops_prefill(std::int64_t n, std::int64_t d, std::int64_t m, bool lazy) {
    if (lazy) {
        return 4 * n * d * d + 2 * n * n * d + 6 * n * d * m;
    }
    return 8 * n * d * d + 4 * n * n * d + 6 * n * d * m;
}

// One decoder layer for a single decode token against a cache of
// `cache_len` tokens (the new token included).
inline std::int64_t layer_flops_decode(std::int64_t cache_len, std::int64_t d, std::int64_t m, bool lazy) {
    if (lazy) {
        return 4 * d * d + 2 * cache_len * d + 6 * d * m;
    }
    return 8 * d * d + 4 * cache_len * d + 6 * d * m;
}

// Prefill ops a layer saves by inheriting attention: the Q and K projections
// plus the score matmul and its softmax-side value product.
inline std::int64_t lazy_layer_savings(std::int64_t n, std::int64_t d) {
    return 4 * n * d * d + 2 * n * n * d;
}

// KV bytes held after `generated` tokens, with per-layer retained visual
// counts. Two stores (K and V) per token per layer; lazy layers are charged
// both stores as well, so heredity never changes this number.
inline std::int64_t kv_bytes(const CostConfig& cfg, const std::vector<int>& retained_visual,
                             std::int64_t generated) {
    cfg.validate();
    if (static_cast<int>(retained_visual.size()) != cfg.num_layers) {
        throw config_error("kv_bytes: retained counts must cover every layer");
    }
    std::int64_t tokens = 0;
    for (int v : retained_visual) {
        if (v < 0) {
            throw config_error("kv_bytes: negative retained count");
        }
        tokens += v + cfg.n_text + generated;
    }
    return tokens * 2 * cfg.model_dim * cfg.kv_bytes_per_element * cfg.batch;
}

struct CostReport {
    std::int64_t prefill_flops = 0;
    std::vector<std::int64_t> decode_flops;       // per decode step
    std::int64_t total_flops = 0;
    std::vector<std::int64_t> kv_bytes_per_step;  // index g = bytes after g generated tokens
    std::int64_t peak_kv_bytes = 0;
    std::vector<int> prefill_visual;              // per layer
    std::vector<std::vector<int>> step_visual;    // [decode step - 1][layer]
};

// Full-pipeline cost: prefill over the pruned per-layer token counts, then
// gen_len decode steps with the visual cache annealed per step. Mirrors the
// engine's bookkeeping exactly so traces and reports can be cross-checked.
inline CostReport pipeline_flops(const CostConfig& cfg, const PruneSchedule& schedule,
                                 const AttenuationSpec& anneal, const HereditySpec& heredity,
                                 int gen_len) {
    cfg.validate();
    schedule.validate(cfg.num_layers);
    anneal.validate();
    heredity.validate(schedule, cfg.num_layers);
    if (gen_len < 0) {
        throw config_error("pipeline_flops: negative generation length");
    }

    const std::int64_t d = cfg.model_dim;
    const std::int64_t m = cfg.mlp_dim;
    CostReport report;
    report.prefill_visual = schedule_keep_counts(schedule, cfg.num_layers, cfg.n_visual);

    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::int64_t n = report.prefill_visual[static_cast<std::size_t>(l)] + cfg.n_text;
        report.prefill_flops += layer_flops_prefill(n, d, m, heredity.is_lazy(l));
    }
    report.total_flops = report.prefill_flops;
    report.kv_bytes_per_step.push_back(kv_bytes(cfg, report.prefill_visual, 0));

    std::vector<int> visual = report.prefill_visual;
    for (int g = 1; g <= gen_len; ++g) {
        const double b = beta(anneal, g);
        std::int64_t step_flops = 0;
        for (int l = 0; l < cfg.num_layers; ++l) {
            const int target = anneal_target(report.prefill_visual[static_cast<std::size_t>(l)], b);
            visual[static_cast<std::size_t>(l)] =
                std::min(visual[static_cast<std::size_t>(l)], target);
            const std::int64_t cache_len = visual[static_cast<std::size_t>(l)] + cfg.n_text + g;
            step_flops += layer_flops_decode(cache_len, d, m, heredity.is_lazy(l));
        }
        report.decode_flops.push_back(step_flops);
        report.total_flops += step_flops;
        report.kv_bytes_per_step.push_back(kv_bytes(cfg, visual, g));
        report.step_visual.push_back(visual);
    }
    report.peak_kv_bytes =
        *std::max_element(report.kv_bytes_per_step.begin(), report.kv_bytes_per_step.end());
    return report;
}

}  // namespace vtrim
