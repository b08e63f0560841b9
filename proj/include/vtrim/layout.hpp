// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vtrim/errors.hpp"

namespace vtrim {

// Token bookkeeping for one sequence: [system][visual][instruction][output].
// Visual tokens are tracked by their position in the original, unpruned
// prompt so analytics can align sequences across layers after pruning.
struct TokenLayout {
    int n_system = 0;
    std::vector<int> visual_original_indices;  // ascending absolute positions
    int n_instruction = 0;
    int n_output = 0;
    int original_visual_count = 0;

    static TokenLayout prompt(int n_system, int n_visual, int n_instruction) {
        if (n_system < 0 || n_visual < 0 || n_instruction < 0) {
            throw config_error("TokenLayout: negative segment length");
        }
        TokenLayout out;
        out.n_system = n_system;
        out.n_instruction = n_instruction;
        out.original_visual_count = n_visual;
        out.visual_original_indices.resize(n_visual);
        for (int i = 0; i < n_visual; ++i) {
            out.visual_original_indices[i] = n_system + i;
        }
        return out;
    }

    int visual_count() const { return static_cast<int>(visual_original_indices.size()); }
    int total() const { return n_system + visual_count() + n_instruction + n_output; }
    int prompt_length() const { return n_system + original_visual_count + n_instruction; }
    int visual_begin() const { return n_system; }

    // Original position of every current row, in row order (always ascending:
    // pruning removes rows without reordering, outputs append at the end).
    std::vector<int> positions() const {
        std::vector<int> out;
        out.reserve(total());
        for (int i = 0; i < n_system; ++i) out.push_back(i);
        for (int p : visual_original_indices) out.push_back(p);
        const int instr_base = n_system + original_visual_count;
        for (int i = 0; i < n_instruction; ++i) out.push_back(instr_base + i);
        for (int i = 0; i < n_output; ++i) out.push_back(prompt_length() + i);
        return out;
    }
};

}  // namespace vtrim
