// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "vtrim/cache.hpp"
#include "vtrim/errors.hpp"
#include "vtrim/schedule.hpp"

namespace vtrim {

enum class AttenuationKind { none, cosine, linear, exponential };

inline const char* to_string(AttenuationKind k) {
    switch (k) {
        case AttenuationKind::none: return "none";
        case AttenuationKind::cosine: return "cosine";
        case AttenuationKind::linear: return "linear";
        case AttenuationKind::exponential: return "exponential";
    }
    return "none";
}

// Decode-time attenuation of the visual KV cache. tau is the horizon (in
// generated tokens) for the cosine and linear kinds; sigma the exponential
// scale. A horizon shorter than the generation length empties the visual
// cache mid-stream, which is legal but usually not what you want.
struct AttenuationSpec {
    AttenuationKind kind = AttenuationKind::none;
    double tau = 50.0;
    double sigma = 20.0;

    static AttenuationSpec cosine(double tau) { return {AttenuationKind::cosine, tau, 20.0}; }
    static AttenuationSpec linear(double tau) { return {AttenuationKind::linear, tau, 20.0}; }
    static AttenuationSpec exponential(double sigma) { return {AttenuationKind::exponential, 50.0, sigma}; }

    void validate() const {
        if ((kind == AttenuationKind::cosine || kind == AttenuationKind::linear) && !(tau > 0.0)) {
            throw config_error("attenuation: tau must be > 0");
        }
        if (kind == AttenuationKind::exponential && !(sigma > 0.0)) {
            throw config_error("attenuation: sigma must be > 0");
        }
    }
};

// Retention factor at `generated` emitted tokens. All kinds start at exactly
// 1 and are non-increasing; cosine and linear reach exactly 0 at the horizon.
inline double beta(const AttenuationSpec& spec, std::int64_t generated) {
    if (generated < 0) {
        throw config_error("beta: negative step");
    }
    const double g = static_cast<double>(generated);
    switch (spec.kind) {
        case AttenuationKind::none:
            return 1.0;
        case AttenuationKind::cosine:
            return g < spec.tau ? std::cos(g * kPi / (2.0 * spec.tau)) : 0.0;
        case AttenuationKind::linear:
            return std::max(1.0 - g / spec.tau, 0.0);
        case AttenuationKind::exponential:
            return std::exp(-g / spec.sigma);
    }
    return 1.0;
}

// floor(count * beta), clamped into [0, count].
inline int anneal_target(int prefill_count, double beta_value) {
    const int t = static_cast<int>(std::floor(static_cast<double>(prefill_count) * beta_value));
    return std::clamp(t, 0, prefill_count);
}

// Trim every layer's visual cache entries to its annealing target for this
// decode step, keeping the best-ranked prefix of the layer's T list.
// Non-visual entries are never touched. Returns the per-layer visual counts
// after trimming.
inline std::vector<int> anneal_caches(KvCacheSet& caches, const AttenuationSpec& spec,
                                      std::int64_t generated) {
    spec.validate();
    const double b = beta(spec, generated);
    std::vector<int> counts(caches.layers.size(), 0);
    for (std::size_t l = 0; l < caches.layers.size(); ++l) {
        LayerCache& cache = caches.layers[l];
        const int target = anneal_target(caches.prefill_visual[l], b);
        if (target >= cache.visual_count()) {
            counts[l] = cache.visual_count();
            continue;
        }
        const std::vector<int>& ranked = caches.ranked[l];
        std::unordered_set<int> keep(ranked.begin(), ranked.begin() + target);
        std::vector<int> keep_rows_idx;
        keep_rows_idx.reserve(static_cast<std::size_t>(cache.tokens()));
        std::vector<int> kept_positions;
        kept_positions.reserve(static_cast<std::size_t>(target));
        for (int i = 0; i < cache.n_system; ++i) keep_rows_idx.push_back(i);
        for (int i = 0; i < cache.visual_count(); ++i) {
            const int pos = cache.visual_positions[static_cast<std::size_t>(i)];
            if (keep.count(pos)) {
                keep_rows_idx.push_back(cache.visual_begin() + i);
                kept_positions.push_back(pos);
            }
        }
        for (int i = cache.visual_begin() + cache.visual_count(); i < cache.tokens(); ++i) {
            keep_rows_idx.push_back(i);
        }
        if (static_cast<int>(kept_positions.size()) != target) {
            throw state_error("anneal_caches: ranked prefix not present in cache");
        }
        if (!cache.lazy) {
            cache.keys = keep_rows(cache.keys, keep_rows_idx);
        }
        cache.values = keep_rows(cache.values, keep_rows_idx);
        cache.visual_positions = std::move(kept_positions);
        counts[l] = target;
    }
    return counts;
}

// Scores and positions of the visual slice of one step's attention record.
struct StepVisualScores {
    std::vector<int> positions;
    std::vector<double> scores;
};

// Fraction of the first step's top-k visual tokens still in the top-k at each
// later step. Entry 0 compares the first step with itself and is exactly 1.
inline std::vector<double> overlap_series(const std::vector<StepVisualScores>& steps, int k) {
    if (steps.empty()) {
        throw config_error("overlap_series: no steps");
    }
    if (k < 1) {
        throw config_error("overlap_series: k must be >= 1");
    }
    const Selection first = select_top(steps.front().scores, k);
    if (first.ranked.empty()) {
        throw config_error("overlap_series: first step has no visual entries");
    }
    std::unordered_set<int> base;
    for (int idx : first.ranked) {
        base.insert(steps.front().positions[static_cast<std::size_t>(idx)]);
    }
    std::vector<double> out;
    out.reserve(steps.size());
    for (const StepVisualScores& step : steps) {
        const Selection sel = select_top(step.scores, k);
        int hits = 0;
        for (int idx : sel.ranked) {
            if (base.count(step.positions[static_cast<std::size_t>(idx)])) ++hits;
        }
        out.push_back(static_cast<double>(hits) / static_cast<double>(base.size()));
    }
    return out;
}

}  // namespace vtrim
