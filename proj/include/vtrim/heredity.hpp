// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "vtrim/errors.hpp"
#include "vtrim/numeric.hpp"
#include "vtrim/schedule.hpp"

namespace vtrim {

// Layers that skip their own Q/K projections, score matmul and softmax, and
// instead apply the most recent preceding non-lazy layer's post-softmax
// attention to freshly projected values. V and output projections and the
// MLP still run.
struct HereditySpec {
    std::vector<int> lazy_layers;  // kept sorted and unique by validate()

    bool is_lazy(int layer) const {
        return std::binary_search(lazy_layers.begin(), lazy_layers.end(), layer);
    }

    // Nearest non-lazy layer below `layer`; the attention donor.
    int source_of(int layer) const {
        int src = layer - 1;
        while (src >= 0 && is_lazy(src)) --src;
        return src;
    }

    // A lazy layer must see the exact token set its donor saw, so no pruning
    // layer may sit in (source, lazy].
    void validate(const PruneSchedule& schedule, int num_layers) const {
        for (std::size_t i = 1; i < lazy_layers.size(); ++i) {
            if (lazy_layers[i] <= lazy_layers[i - 1]) {
                throw config_error("heredity: lazy layers must be sorted and unique");
            }
        }
        const std::vector<int> prunes = prune_layers(schedule, num_layers);
        for (int w : lazy_layers) {
            if (w < 1 || w >= num_layers) {
                throw config_error("heredity: lazy layer " + std::to_string(w) +
                                   " out of range [1, num_layers)");
            }
            const int src = source_of(w);
            if (src < 0) {
                throw config_error("heredity: lazy layer " + std::to_string(w) +
                                   " has no non-lazy layer below it");
            }
            for (int p : prunes) {
                if (p > src && p <= w) {
                    throw config_error("heredity: pruning at layer " + std::to_string(p) +
                                       " changes the token set between source layer " +
                                       std::to_string(src) + " and lazy layer " + std::to_string(w));
                }
            }
        }
    }
};

// Output of a lazy layer's attention: inherited post-softmax weights applied
// to this layer's own values.
inline Matrix lazy_attention(const Matrix& source_attention, const Matrix& values) {
    if (source_attention.cols != values.rows) {
        throw state_error("lazy_attention: attention width " + std::to_string(source_attention.cols) +
                          " does not match value rows " + std::to_string(values.rows));
    }
    return matmul(source_attention, values);
}

}  // namespace vtrim
