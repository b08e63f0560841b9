// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vtrim/errors.hpp"
#include "vtrim/layout.hpp"
#include "vtrim/numeric.hpp"

namespace vtrim {

enum class PruneKind { none, pvtp, fastv_like, vtw_like };

inline const char* to_string(PruneKind k) {
    switch (k) {
        case PruneKind::none: return "none";
        case PruneKind::pvtp: return "pvtp";
        case PruneKind::fastv_like: return "fastv_like";
        case PruneKind::vtw_like: return "vtw_like";
    }
    return "none";
}

// Keep/prune ratios are stored as integer parts-per-million. The ratio grids
// of interest are multiples of 0.25%, so ppm is lossless, and the keep-ratio
// closed form below evaluates exactly instead of accumulating binary-float
// error from literals like 0.1225.
constexpr std::int64_t kPpmScale = 1'000'000;

inline std::int64_t ratio_to_ppm(double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw config_error("ratio out of range [0, 1]: " + std::to_string(fraction));
    }
    return std::llround(fraction * static_cast<double>(kPpmScale));
}

inline double ppm_to_ratio(std::int64_t ppm) {
    return static_cast<double>(ppm) / static_cast<double>(kPpmScale);
}

// floor(fraction * count) with the fraction held in ppm.
inline int ppm_floor(std::int64_t ppm, int count) {
    return static_cast<int>((ppm * static_cast<std::int64_t>(count)) / kPpmScale);
}

// Visual-token pruning policy for the prefill pass.
//
//   pvtp        progressive pruning: at start_layer drop first_ratio of the
//               original visual count, then a further step_ratio of the
//               original count at every stride-th layer after it.
//   fastv_like  one-shot prune at fastv_layer keeping (1 - fastv_ratio).
//   vtw_like    drop every visual token at vtw_cut_layer.
//
// All ratios are fractions of the original visual count; keep counts floor.
struct PruneSchedule {
    PruneKind kind = PruneKind::none;
    int start_layer = 3;
    int stride = 7;
    std::int64_t first_ratio_ppm = 500'000;
    std::int64_t step_ratio_ppm = 122'500;
    int fastv_layer = 2;
    std::int64_t fastv_ratio_ppm = 500'000;
    int vtw_cut_layer = -1;  // -1 resolves to num_layers / 2

    static PruneSchedule pvtp(int start_layer, int stride, double first_ratio, double step_ratio) {
        PruneSchedule s;
        s.kind = PruneKind::pvtp;
        s.start_layer = start_layer;
        s.stride = stride;
        s.first_ratio_ppm = ratio_to_ppm(first_ratio);
        s.step_ratio_ppm = ratio_to_ppm(step_ratio);
        return s;
    }
    static PruneSchedule fastv(int layer, double ratio) {
        PruneSchedule s;
        s.kind = PruneKind::fastv_like;
        s.fastv_layer = layer;
        s.fastv_ratio_ppm = ratio_to_ppm(ratio);
        return s;
    }
    static PruneSchedule vtw(int cut_layer = -1) {
        PruneSchedule s;
        s.kind = PruneKind::vtw_like;
        s.vtw_cut_layer = cut_layer;
        return s;
    }

    int resolved_cut(int num_layers) const {
        return vtw_cut_layer >= 0 ? vtw_cut_layer : num_layers / 2;
    }

    // Number of scheduled layers after the first one. The last scheduled
    // layer is the largest start_layer + k*stride below num_layers.
    int later_prune_steps(int num_layers) const {
        if (num_layers - 1 < start_layer) return 0;
        return (num_layers - 1 - start_layer) / stride;
    }

    // Final-layer keep fraction, in ppm. Exact by construction.
    std::int64_t final_keep_ppm(int num_layers) const {
        switch (kind) {
            case PruneKind::none:
                return kPpmScale;
            case PruneKind::pvtp:
                return kPpmScale - first_ratio_ppm -
                       static_cast<std::int64_t>(later_prune_steps(num_layers)) * step_ratio_ppm;
            case PruneKind::fastv_like:
                return kPpmScale - fastv_ratio_ppm;
            case PruneKind::vtw_like:
                return 0;
        }
        return kPpmScale;
    }

    double final_keep_fraction(int num_layers) const {
        return ppm_to_ratio(final_keep_ppm(num_layers));
    }

    void validate(int num_layers) const {
        if (num_layers < 1) {
            throw config_error("schedule: num_layers must be >= 1");
        }
        switch (kind) {
            case PruneKind::none:
                return;
            case PruneKind::pvtp: {
                // Ranking needs the previous layer's attention record, so the
                // first scheduled layer cannot be layer 0.
                if (start_layer < 1 || start_layer >= num_layers) {
                    throw config_error("pvtp: start_layer must be in [1, num_layers)");
                }
                if (stride < 1) {
                    throw config_error("pvtp: stride must be >= 1");
                }
                if (first_ratio_ppm < 0 || first_ratio_ppm > kPpmScale ||
                    step_ratio_ppm < 0 || step_ratio_ppm > kPpmScale) {
                    throw config_error("pvtp: ratios must lie in [0, 1]");
                }
                if (final_keep_ppm(num_layers) < 0) {
                    throw config_error("pvtp: schedule drives the keep fraction below zero");
                }
                return;
            }
            case PruneKind::fastv_like:
                if (fastv_layer < 1 || fastv_layer >= num_layers) {
                    throw config_error("fastv_like: prune layer must be in [1, num_layers)");
                }
                if (fastv_ratio_ppm < 0 || fastv_ratio_ppm > kPpmScale) {
                    throw config_error("fastv_like: ratio must lie in [0, 1]");
                }
                return;
            case PruneKind::vtw_like:
                if (resolved_cut(num_layers) < 0 || resolved_cut(num_layers) >= num_layers) {
                    throw config_error("vtw_like: cut layer must be in [0, num_layers)");
                }
                return;
        }
    }
};

// True when the schedule prunes immediately before running `layer`.
inline bool should_prune(const PruneSchedule& s, int layer, int num_layers) {
    if (layer < 0 || layer >= num_layers) {
        throw config_error("should_prune: layer out of range");
    }
    switch (s.kind) {
        case PruneKind::none:
            return false;
        case PruneKind::pvtp:
            return layer >= s.start_layer && (layer - s.start_layer) % s.stride == 0;
        case PruneKind::fastv_like:
            return layer == s.fastv_layer;
        case PruneKind::vtw_like:
            return layer == s.resolved_cut(num_layers);
    }
    return false;
}

inline std::vector<int> prune_layers(const PruneSchedule& s, int num_layers) {
    std::vector<int> out;
    for (int l = 0; l < num_layers; ++l) {
        if (should_prune(s, l, num_layers)) out.push_back(l);
    }
    return out;
}

// Visual tokens entering each layer. counts[l] applies from the prune that
// runs immediately before layer l; layers between scheduled layers inherit.
inline std::vector<int> schedule_keep_counts(const PruneSchedule& s, int num_layers, int n_visual) {
    s.validate(num_layers);
    if (n_visual < 0) {
        throw config_error("schedule_keep_counts: negative visual count");
    }
    std::vector<int> counts(static_cast<std::size_t>(num_layers), n_visual);
    switch (s.kind) {
        case PruneKind::none:
            break;
        case PruneKind::pvtp: {
            std::int64_t keep_ppm = kPpmScale;
            for (int l = s.start_layer; l < num_layers; ++l) {
                if ((l - s.start_layer) % s.stride == 0) {
                    keep_ppm -= (l == s.start_layer) ? s.first_ratio_ppm : s.step_ratio_ppm;
                }
                counts[static_cast<std::size_t>(l)] = ppm_floor(keep_ppm, n_visual);
            }
            break;
        }
        case PruneKind::fastv_like: {
            const int kept = ppm_floor(kPpmScale - s.fastv_ratio_ppm, n_visual);
            for (int l = s.fastv_layer; l < num_layers; ++l) {
                counts[static_cast<std::size_t>(l)] = kept;
            }
            break;
        }
        case PruneKind::vtw_like: {
            for (int l = s.resolved_cut(num_layers); l < num_layers; ++l) {
                counts[static_cast<std::size_t>(l)] = 0;
            }
            break;
        }
    }
    return counts;
}

// Result of ranking a score vector: `ranked` is descending by score with
// ties resolved toward the lower index, `ordered` is the same set ascending.
struct Selection {
    std::vector<int> ranked;
    std::vector<int> ordered;
    bool clamped = false;
};

// Top keep_k indices of `scores`. keep_k larger than the vector clamps and
// flags the selection; callers count those as warnings rather than failing.
inline Selection select_top(const std::vector<double>& scores, int keep_k) {
    if (keep_k < 0) {
        throw config_error("select_top: negative keep count");
    }
    Selection sel;
    const int n = static_cast<int>(scores.size());
    if (keep_k > n) {
        keep_k = n;
        sel.clamped = true;
    }
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&scores](int a, int b) {
        if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)]) {
            return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
        }
        return a < b;
    });
    sel.ranked.assign(idx.begin(), idx.begin() + keep_k);
    sel.ordered = sel.ranked;
    std::sort(sel.ordered.begin(), sel.ordered.end());
    return sel;
}

// Drop visual rows not listed in `keep` (indices into the current visual
// segment, ascending). Retained rows keep their relative order.
inline std::pair<TokenLayout, Matrix> apply_prune(const TokenLayout& layout, const Matrix& rows,
                                                  const std::vector<int>& keep) {
    if (rows.rows != static_cast<std::size_t>(layout.total())) {
        throw state_error("apply_prune: row count does not match layout");
    }
    const int nv = layout.visual_count();
    int prev = -1;
    for (int k : keep) {
        if (k <= prev || k >= nv) {
            throw config_error("apply_prune: keep set must be ascending within the visual segment");
        }
        prev = k;
    }
    TokenLayout out_layout = layout;
    out_layout.visual_original_indices.clear();
    out_layout.visual_original_indices.reserve(keep.size());
    std::vector<int> row_keep;
    row_keep.reserve(static_cast<std::size_t>(layout.total()) - nv + keep.size());
    for (int i = 0; i < layout.n_system; ++i) row_keep.push_back(i);
    for (int k : keep) {
        out_layout.visual_original_indices.push_back(layout.visual_original_indices[static_cast<std::size_t>(k)]);
        row_keep.push_back(layout.visual_begin() + k);
    }
    for (int i = layout.visual_begin() + nv; i < layout.total(); ++i) row_keep.push_back(i);
    return {std::move(out_layout), keep_rows(rows, row_keep)};
}

}  // namespace vtrim
