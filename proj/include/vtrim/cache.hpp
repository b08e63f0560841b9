// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "vtrim/errors.hpp"
#include "vtrim/numeric.hpp"

namespace vtrim {

// Head-averaged attention row of one layer at one step, plus enough position
// metadata to compare rows across layers after pruning has desynchronized
// their token sets. Entries follow cache row order, which is ascending in
// original position.
struct AttentionRecord {
    int layer = 0;
    std::int64_t step = 0;
    std::vector<double> scores;
    std::vector<int> positions;
    int visual_begin = 0;
    int visual_count = 0;

    std::vector<double> visual_scores() const {
        return {scores.begin() + visual_begin, scores.begin() + visual_begin + visual_count};
    }
    std::vector<int> visual_positions() const {
        return {positions.begin() + visual_begin, positions.begin() + visual_begin + visual_count};
    }
};

// Share of one row's attention mass landing on visual tokens.
inline double visual_share(const AttentionRecord& rec) {
    double all = 0.0;
    for (double s : rec.scores) all += s;
    if (all == 0.0) return 0.0;
    double vis = 0.0;
    for (int i = 0; i < rec.visual_count; ++i) {
        vis += rec.scores[static_cast<std::size_t>(rec.visual_begin + i)];
    }
    return vis / all;
}

// Per-layer K/V store. Rows are [system][visual][instruction][generated].
// A lazy layer never projects keys, so its key store stays at zero rows and
// only the value store carries tokens.
struct LayerCache {
    Matrix keys;
    Matrix values;
    int n_system = 0;
    int n_instruction = 0;
    std::vector<int> visual_positions;  // ascending original indices
    int generated = 0;
    int prompt_length = 0;  // original (unpruned) prompt length
    bool lazy = false;

    int visual_count() const { return static_cast<int>(visual_positions.size()); }
    int visual_begin() const { return n_system; }
    int tokens() const { return n_system + visual_count() + n_instruction + generated; }

    std::vector<int> positions() const {
        std::vector<int> out;
        out.reserve(tokens());
        for (int i = 0; i < n_system; ++i) out.push_back(i);
        for (int p : visual_positions) out.push_back(p);
        const int instr_base = prompt_length - n_instruction;
        for (int i = 0; i < n_instruction; ++i) out.push_back(instr_base + i);
        for (int i = 0; i < generated; ++i) out.push_back(prompt_length + i);
        return out;
    }

    void check() const {
        if (values.rows != static_cast<std::size_t>(tokens())) {
            throw state_error("LayerCache: value rows out of sync with metadata");
        }
        if (!lazy && keys.rows != values.rows) {
            throw state_error("LayerCache: key rows out of sync with value rows");
        }
        if (lazy && keys.rows != 0) {
            throw state_error("LayerCache: lazy layer must not hold keys");
        }
    }
};

// All layer caches plus the visual ranking each layer trims against during
// generation. ranked[l] lists the layer's retained visual tokens by original
// position, descending by prefill attention; the retained set at any step is
// a prefix of it. prefill_visual[l] anchors the annealing target.
struct KvCacheSet {
    std::vector<LayerCache> layers;
    std::vector<std::vector<int>> ranked;
    std::vector<int> prefill_visual;

    void check() const {
        for (const LayerCache& l : layers) l.check();
    }
};

}  // namespace vtrim
