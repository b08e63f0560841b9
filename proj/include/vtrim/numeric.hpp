// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vtrim/errors.hpp"

namespace vtrim {

// Additive mask value standing in for -inf. Large enough that exp() of any
// masked score underflows to exactly 0.0 after max-subtraction.
constexpr double kMaskedScore = -1e30;

constexpr double kPi = 3.14159265358979323846;

// Epsilon inside the RMS denominator.
constexpr double kRmsEpsilon = 1e-6;

// Dense row-major matrix of doubles. Everything in this project is small
// enough that a flat vector plus index arithmetic beats pulling in a linear
// algebra dependency.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    double at(std::size_t r, std::size_t c) const {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    bool operator==(const Matrix& other) const {
        return rows == other.rows && cols == other.cols && data == other.data;
    }
};

// C = A * B.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw config_error("matmul: inner dimensions disagree (" + std::to_string(a.cols) +
                           " vs " + std::to_string(b.rows) + ")");
    }
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

// C = A * B^T. Used for attention scores so the key matrix never needs an
// explicit transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) {
        throw config_error("matmul_nt: inner dimensions disagree (" + std::to_string(a.cols) +
                           " vs " + std::to_string(b.cols) + ")");
    }
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += arow[k] * brow[k];
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

// Row-wise stabilized softmax. Masked entries (kMaskedScore + anything
// bounded) come out as exact zeros; an all-equal row comes out uniform.
inline Matrix softmax_rows(const Matrix& scores) {
    Matrix out(scores.rows, scores.cols);
    for (std::size_t i = 0; i < scores.rows; ++i) {
        const double* srow = scores.row(i);
        double* orow = out.row(i);
        double mx = srow[0];
        for (std::size_t j = 1; j < scores.cols; ++j) {
            if (srow[j] > mx) mx = srow[j];
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < scores.cols; ++j) {
            orow[j] = std::exp(srow[j] - mx);
            sum += orow[j];
        }
        for (std::size_t j = 0; j < scores.cols; ++j) {
            orow[j] /= sum;
        }
    }
    return out;
}

// Additive causal mask: zero on and below the diagonal, kMaskedScore above.
inline Matrix causal_mask(std::size_t n) {
    if (n == 0) {
        throw config_error("causal_mask: empty sequence");
    }
    Matrix out(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            out.at(i, j) = kMaskedScore;
        }
    }
    return out;
}

// splitmix64 step. Hand-rolled so generated values are identical across
// standard libraries; std::normal_distribution makes no such promise.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Uniform draw in (0, 1].
inline double uniform_open01(std::uint64_t& state) {
    return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

// Decorrelated stream seed for weight slot `stream` under one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ull * (stream + 1));
    return splitmix64(s);
}

// Matrix of N(0, scale^2) draws via Box-Muller over splitmix64.
inline Matrix seeded_normal(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale) {
    Matrix out(rows, cols);
    std::uint64_t state = seed;
    const std::size_t total = rows * cols;
    for (std::size_t i = 0; i < total; i += 2) {
        const double u1 = uniform_open01(state);
        const double u2 = uniform_open01(state);
        const double r = std::sqrt(-2.0 * std::log(u1));
        out.data[i] = scale * r * std::cos(2.0 * kPi * u2);
        if (i + 1 < total) {
            out.data[i + 1] = scale * r * std::sin(2.0 * kPi * u2);
        }
    }
    return out;
}

// x / sqrt(mean(x^2) + eps), no learned gain.
inline std::vector<double> rms_normalize(const std::vector<double>& x) {
    if (x.empty()) {
        throw config_error("rms_normalize: empty vector");
    }
    double msq = 0.0;
    for (double v : x) msq += v * v;
    msq /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(msq + kRmsEpsilon);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv;
    return out;
}

inline Matrix rms_normalize_rows(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* in = x.row(i);
        double* o = out.row(i);
        double msq = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) msq += in[j] * in[j];
        msq /= static_cast<double>(x.cols);
        const double inv = 1.0 / std::sqrt(msq + kRmsEpsilon);
        for (std::size_t j = 0; j < x.cols; ++j) o[j] = in[j] * inv;
    }
    return out;
}

inline double silu(double x) {
    return x / (1.0 + std::exp(-x));
}

// Absolute sinusoidal position encoding for one position.
inline std::vector<double> sinusoidal_position(std::size_t position, std::size_t dim) {
    if (dim == 0) {
        throw config_error("sinusoidal_position: zero dimension");
    }
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i * 2 < dim; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        const double angle = static_cast<double>(position) * freq;
        out[2 * i] = std::sin(angle);
        if (2 * i + 1 < dim) out[2 * i + 1] = std::cos(angle);
    }
    return out;
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// Index of the largest value; ties resolve to the lowest index.
inline int argmax(const std::vector<double>& v) {
    if (v.empty()) {
        throw state_error("argmax: empty vector");
    }
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

// Copy of `m` restricted to the given (ascending) row indices.
inline Matrix keep_rows(const Matrix& m, const std::vector<int>& rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        if (r < 0 || static_cast<std::size_t>(r) >= m.rows) {
            throw state_error("keep_rows: row index out of range");
        }
        for (std::size_t j = 0; j < m.cols; ++j) {
            out.at(i, j) = m.at(static_cast<std::size_t>(r), j);
        }
    }
    return out;
}

}  // namespace vtrim
