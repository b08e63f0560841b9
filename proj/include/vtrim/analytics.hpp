// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vtrim/cache.hpp"
#include "vtrim/errors.hpp"
#include "vtrim/numeric.hpp"

namespace vtrim {

// Cosine similarity. Bitwise-equal inputs short-circuit to exactly 1.0 so
// that inherited attention rows compare as identical rather than
// 1-minus-rounding. A zero-norm side yields NaN, the "no signal" marker.
inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw config_error("cosine_similarity: length mismatch");
    }
    if (a.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (a == b) {
        double norm = 0.0;
        for (double v : a) norm += v * v;
        return norm == 0.0 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::min(1.0, std::max(-1.0, c));
}

// Restrict two records to the token positions present in both, in ascending
// position order. Pruning desynchronizes layers, so this is the only fair
// comparison basis.
inline void align_records(const AttentionRecord& a, const AttentionRecord& b,
                          std::vector<double>& out_a, std::vector<double>& out_b) {
    out_a.clear();
    out_b.clear();
    std::size_t i = 0, j = 0;
    while (i < a.positions.size() && j < b.positions.size()) {
        if (a.positions[i] == b.positions[j]) {
            out_a.push_back(a.scores[i]);
            out_b.push_back(b.scores[j]);
            ++i;
            ++j;
        } else if (a.positions[i] < b.positions[j]) {
            ++i;
        } else {
            ++j;
        }
    }
}

// Layer-by-layer cosine similarity of one step's attention records.
// Symmetric, unit diagonal; NaN marks pairs with no comparable signal.
inline Matrix similarity_matrix(const std::vector<AttentionRecord>& layer_records) {
    const std::size_t L = layer_records.size();
    if (L == 0) {
        throw config_error("similarity_matrix: no records");
    }
    Matrix out(L, L, 0.0);
    std::vector<double> va, vb;
    for (std::size_t i = 0; i < L; ++i) {
        out.at(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) {
            align_records(layer_records[i], layer_records[j], va, vb);
            const double c = cosine_similarity(va, vb);
            out.at(i, j) = c;
            out.at(j, i) = c;
        }
    }
    return out;
}

// Layers whose attention row stays within `threshold` similarity of the
// layer directly below: the natural candidates for attention inheritance.
inline std::vector<int> lazy_candidates(const Matrix& similarity, double threshold) {
    if (similarity.rows != similarity.cols || similarity.rows == 0) {
        throw config_error("lazy_candidates: matrix must be square and non-empty");
    }
    std::vector<int> out;
    for (std::size_t l = 1; l < similarity.rows; ++l) {
        if (similarity.at(l, l - 1) >= threshold) {
            out.push_back(static_cast<int>(l));
        }
    }
    return out;
}

}  // namespace vtrim
