// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vtrim/annealing.hpp"
#include "vtrim/cache.hpp"
#include "vtrim/cost.hpp"
#include "vtrim/errors.hpp"
#include "vtrim/heredity.hpp"
#include "vtrim/layout.hpp"
#include "vtrim/numeric.hpp"
#include "vtrim/schedule.hpp"

namespace vtrim {

struct ModelConfig {
    int num_layers = 8;
    int model_dim = 64;
    int num_heads = 4;
    int mlp_dim = 128;
    int vocab_size = 256;
    int max_positions = 4096;
    std::uint64_t seed = 1;

    int head_dim() const { return model_dim / num_heads; }

    void validate() const {
        if (num_layers < 1 || model_dim < 1 || num_heads < 1 || mlp_dim < 1) {
            throw config_error("model: dimensions must be positive");
        }
        if (model_dim % num_heads != 0) {
            throw config_error("model: model_dim must be divisible by num_heads");
        }
        if (vocab_size < 2) {
            throw config_error("model: vocab_size must be >= 2");
        }
        if (max_positions < 1) {
            throw config_error("model: max_positions must be positive");
        }
    }
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;      // model_dim x model_dim
    Matrix w_gate, w_up;        // model_dim x mlp_dim
    Matrix w_down;              // mlp_dim x model_dim
};

// All weights are seeded draws; one master seed pins the whole model.
struct ModelWeights {
    Matrix embedding;  // vocab x model_dim
    Matrix lm_head;    // model_dim x vocab
    std::vector<LayerWeights> layers;

    static ModelWeights build(const ModelConfig& cfg) {
        cfg.validate();
        const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
        const std::size_t m = static_cast<std::size_t>(cfg.mlp_dim);
        const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
        const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));
        const double down_scale = 1.0 / std::sqrt(static_cast<double>(m));

        ModelWeights w;
        w.embedding = seeded_normal(v, d, derive_seed(cfg.seed, 0), 1.0);
        w.lm_head = seeded_normal(d, v, derive_seed(cfg.seed, 1), proj_scale);
        w.layers.resize(static_cast<std::size_t>(cfg.num_layers));
        for (int l = 0; l < cfg.num_layers; ++l) {
            const std::uint64_t base = 2 + static_cast<std::uint64_t>(l) * 7;
            LayerWeights& lw = w.layers[static_cast<std::size_t>(l)];
            lw.wq = seeded_normal(d, d, derive_seed(cfg.seed, base + 0), proj_scale);
            lw.wk = seeded_normal(d, d, derive_seed(cfg.seed, base + 1), proj_scale);
            lw.wv = seeded_normal(d, d, derive_seed(cfg.seed, base + 2), proj_scale);
            lw.wo = seeded_normal(d, d, derive_seed(cfg.seed, base + 3), proj_scale);
            lw.w_gate = seeded_normal(d, m, derive_seed(cfg.seed, base + 4), proj_scale);
            lw.w_up = seeded_normal(d, m, derive_seed(cfg.seed, base + 5), proj_scale);
            lw.w_down = seeded_normal(m, d, derive_seed(cfg.seed, base + 6), down_scale);
        }
        return w;
    }
};

// Prompt = [system ids][visual embeddings][instruction ids], with absolute
// sinusoidal positions added once at build time. Retained tokens keep these
// original positions through every later prune.
struct Prompt {
    Matrix embeddings;
    TokenLayout layout;
    std::vector<int> token_ids;  // -1 on visual slots
};

inline Prompt build_prompt(const ModelConfig& cfg, const ModelWeights& weights, int n_system,
                           int n_visual, int n_instruction) {
    cfg.validate();
    TokenLayout layout = TokenLayout::prompt(n_system, n_visual, n_instruction);
    if (layout.total() < 1) {
        throw config_error("build_prompt: empty prompt");
    }
    if (layout.total() > cfg.max_positions) {
        throw config_error("build_prompt: prompt length exceeds max_positions");
    }
    const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
    const std::uint64_t stream_base = 2 + static_cast<std::uint64_t>(cfg.num_layers) * 7;
    const Matrix visual = seeded_normal(static_cast<std::size_t>(n_visual), d,
                                        derive_seed(cfg.seed, stream_base + 0), 1.0);
    std::uint64_t sys_state = derive_seed(cfg.seed, stream_base + 1);
    std::uint64_t ins_state = derive_seed(cfg.seed, stream_base + 2);

    Prompt prompt;
    prompt.layout = layout;
    prompt.embeddings = Matrix(static_cast<std::size_t>(layout.total()), d);
    prompt.token_ids.assign(static_cast<std::size_t>(layout.total()), -1);

    int row = 0;
    auto place_token = [&](std::uint64_t& state) {
        const int id = static_cast<int>(splitmix64(state) % static_cast<std::uint64_t>(cfg.vocab_size));
        prompt.token_ids[static_cast<std::size_t>(row)] = id;
        const double* e = weights.embedding.row(static_cast<std::size_t>(id));
        double* out = prompt.embeddings.row(static_cast<std::size_t>(row));
        for (std::size_t j = 0; j < d; ++j) out[j] = e[j];
        ++row;
    };
    for (int i = 0; i < n_system; ++i) place_token(sys_state);
    for (int i = 0; i < n_visual; ++i) {
        const double* e = visual.row(static_cast<std::size_t>(i));
        double* out = prompt.embeddings.row(static_cast<std::size_t>(row));
        for (std::size_t j = 0; j < d; ++j) out[j] = e[j];
        ++row;
    }
    for (int i = 0; i < n_instruction; ++i) place_token(ins_state);

    for (int i = 0; i < layout.total(); ++i) {
        const std::vector<double> pos = sinusoidal_position(static_cast<std::size_t>(i), d);
        double* out = prompt.embeddings.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < d; ++j) out[j] += pos[j];
    }
    return prompt;
}

struct Policies {
    PruneSchedule prune;
    AttenuationSpec anneal;
    HereditySpec heredity;

    void validate(int num_layers) const {
        prune.validate(num_layers);
        anneal.validate();
        heredity.validate(prune, num_layers);
    }
};

struct StepStat {
    std::int64_t step = 0;  // 0 = prefill, then one per decode step
    int token = -1;         // token emitted at this step
    std::vector<int> visual_counts;  // per layer, after this step's trimming
    double visual_share = 0.0;       // mean over layers at this step
    std::int64_t cumulative_flops = 0;
};

struct GenerationTrace {
    std::vector<int> tokens;
    std::vector<StepStat> steps;
    std::vector<std::vector<AttentionRecord>> records;  // [step][layer], when recorded
    std::vector<std::vector<int>> ranked;               // final T per layer
    std::vector<int> prefill_visual;                    // per layer
    std::vector<std::vector<double>> logits;            // [step], when recorded
    std::int64_t clamp_warnings = 0;
    int prompt_length = 0;

    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (int t : tokens) {
            for (int b = 0; b < 4; ++b) {
                h ^= static_cast<std::uint64_t>((static_cast<std::uint32_t>(t) >> (8 * b)) & 0xff);
                h *= 0x100000001b3ull;
            }
        }
        return h;
    }
};

namespace detail {

inline Matrix col_slice(const Matrix& m, std::size_t begin, std::size_t count) {
    Matrix out(m.rows, count);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* in = m.row(i);
        double* o = out.row(i);
        for (std::size_t j = 0; j < count; ++j) o[j] = in[begin + j];
    }
    return out;
}

inline void set_col_slice(Matrix& dst, std::size_t begin, const Matrix& src) {
    for (std::size_t i = 0; i < src.rows; ++i) {
        const double* in = src.row(i);
        double* o = dst.row(i);
        for (std::size_t j = 0; j < src.cols; ++j) o[begin + j] = in[j];
    }
}

inline void append_row(Matrix& m, const Matrix& row) {
    if (m.rows == 0) {
        m.cols = row.cols;
    } else if (m.cols != row.cols) {
        throw state_error("append_row: column mismatch");
    }
    m.data.insert(m.data.end(), row.data.begin(), row.data.end());
    ++m.rows;
}

// Gated MLP block: down(silu(x W_gate) * (x W_up)), applied to normalized x.
inline Matrix gated_mlp(const Matrix& x_norm, const LayerWeights& lw) {
    Matrix gate = matmul(x_norm, lw.w_gate);
    const Matrix up = matmul(x_norm, lw.w_up);
    for (std::size_t i = 0; i < gate.data.size(); ++i) {
        gate.data[i] = silu(gate.data[i]) * up.data[i];
    }
    return matmul(gate, lw.w_down);
}

}  // namespace detail

// Desk-scale decoder-only transformer with hooks for visual-token pruning,
// decode-time cache annealing and attention heredity. Double precision,
// greedy decoding, deterministic for a fixed (config, seed).
class DecoderEngine {
public:
    struct Options {
        bool record_attention = true;
        bool record_logits = false;
    };

    explicit DecoderEngine(const ModelConfig& cfg) : m_cfg(cfg), m_weights(ModelWeights::build(cfg)) {}

    const ModelConfig& config() const { return m_cfg; }
    const ModelWeights& weights() const { return m_weights; }

    Prompt make_prompt(int n_system, int n_visual, int n_instruction) const {
        return build_prompt(m_cfg, m_weights, n_system, n_visual, n_instruction);
    }

    GenerationTrace generate(const Prompt& prompt, const Policies& policies,
                             int max_new_tokens) const {
        return generate(prompt, policies, max_new_tokens, Options());
    }

    GenerationTrace generate(const Prompt& prompt, const Policies& policies, int max_new_tokens,
                             const Options& opts) const {
        policies.validate(m_cfg.num_layers);
        if (max_new_tokens < 1) {
            throw config_error("generate: max_new_tokens must be >= 1");
        }
        if (prompt.layout.prompt_length() + max_new_tokens > m_cfg.max_positions) {
            throw config_error("generate: prompt plus max_new_tokens exceeds max_positions");
        }
        if (prompt.embeddings.rows != static_cast<std::size_t>(prompt.layout.total()) ||
            prompt.layout.n_output != 0) {
            throw state_error("generate: prompt shape out of sync with layout");
        }

        const int L = m_cfg.num_layers;
        GenerationTrace trace;
        trace.prompt_length = prompt.layout.prompt_length();
        trace.ranked.resize(static_cast<std::size_t>(L));
        trace.prefill_visual.assign(static_cast<std::size_t>(L), 0);

        KvCacheSet caches;
        caches.layers.resize(static_cast<std::size_t>(L));
        caches.prefill_visual.assign(static_cast<std::size_t>(L), 0);

        std::int64_t flops = 0;
        prefill(prompt, policies, trace, caches, flops, opts);
        caches.ranked = trace.ranked;

        for (int g = 1; g < max_new_tokens; ++g) {
            decode_step(policies, trace, caches, flops, g, opts);
        }
        return trace;
    }

private:
    // Scores -> softmax for one head's query rows against a key matrix.
    static Matrix head_attention(const Matrix& q, const Matrix& k, double scale, const Matrix* mask) {
        Matrix scores = matmul_nt(q, k);
        for (double& s : scores.data) s *= scale;
        if (mask != nullptr) {
            for (std::size_t i = 0; i < scores.data.size(); ++i) scores.data[i] += mask->data[i];
        }
        return softmax_rows(scores);
    }

    std::vector<double> head_logits(const Matrix& x, std::size_t row) const {
        std::vector<double> h(static_cast<std::size_t>(m_cfg.model_dim));
        const double* in = x.row(row);
        for (std::size_t j = 0; j < h.size(); ++j) h[j] = in[j];
        h = rms_normalize(h);
        std::vector<double> logits(static_cast<std::size_t>(m_cfg.vocab_size), 0.0);
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double* wrow = m_weights.lm_head.row(i);
            for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += h[i] * wrow[j];
        }
        return logits;
    }

    void prefill(const Prompt& prompt, const Policies& policies, GenerationTrace& trace,
                 KvCacheSet& caches, std::int64_t& flops, const Options& opts) const {
        const int L = m_cfg.num_layers;
        const int H = m_cfg.num_heads;
        const std::size_t hd = static_cast<std::size_t>(m_cfg.head_dim());
        const std::size_t d = static_cast<std::size_t>(m_cfg.model_dim);
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        const std::vector<int> keep_counts =
            schedule_keep_counts(policies.prune, L, prompt.layout.original_visual_count);

        Matrix x = prompt.embeddings;
        TokenLayout layout = prompt.layout;
        Matrix mask = causal_mask(static_cast<std::size_t>(layout.total()));

        std::vector<Matrix> inherited;  // per-head attention of the most recent non-lazy layer
        AttentionRecord inherited_record;
        AttentionRecord prev_record;
        bool pruned_yet = false;
        double share_sum = 0.0;
        std::vector<AttentionRecord> step_records;

        for (int l = 0; l < L; ++l) {
            bool pruned_here = false;
            if (layout.total() > 1 && should_prune(policies.prune, l, L)) {
                const int target = keep_counts[static_cast<std::size_t>(l)];
                std::vector<int> ranked_orig;
                std::vector<int> keep;
                if (policies.prune.kind == PruneKind::vtw_like) {
                    // Drops everything; no ranking signal needed.
                } else {
                    Selection sel = select_top(prev_record.visual_scores(), target);
                    if (sel.clamped) ++trace.clamp_warnings;
                    ranked_orig.reserve(sel.ranked.size());
                    for (int rel : sel.ranked) {
                        ranked_orig.push_back(layout.visual_original_indices[static_cast<std::size_t>(rel)]);
                    }
                    keep = std::move(sel.ordered);
                }
                std::tie(layout, x) = apply_prune(layout, x, keep);
                mask = causal_mask(static_cast<std::size_t>(layout.total()));
                trace.ranked[static_cast<std::size_t>(l)] = std::move(ranked_orig);
                pruned_yet = true;
                pruned_here = true;
            }

            const LayerWeights& lw = m_weights.layers[static_cast<std::size_t>(l)];
            const bool lazy = policies.heredity.is_lazy(l);
            const std::size_t n = static_cast<std::size_t>(layout.total());
            LayerCache& cache = caches.layers[static_cast<std::size_t>(l)];
            AttentionRecord record;

            const Matrix x_norm = rms_normalize_rows(x);
            Matrix attn_out(n, d);
            if (lazy) {
                const Matrix v = matmul(x_norm, lw.wv);
                for (int h = 0; h < H; ++h) {
                    const Matrix v_h = detail::col_slice(v, static_cast<std::size_t>(h) * hd, hd);
                    detail::set_col_slice(attn_out, static_cast<std::size_t>(h) * hd,
                                          lazy_attention(inherited[static_cast<std::size_t>(h)], v_h));
                }
                record = inherited_record;
                record.layer = l;
                cache.keys = Matrix();
                cache.values = v;
                cache.lazy = true;
            } else {
                const Matrix q = matmul(x_norm, lw.wq);
                const Matrix k = matmul(x_norm, lw.wk);
                const Matrix v = matmul(x_norm, lw.wv);
                record.scores.assign(n, 0.0);
                inherited.assign(static_cast<std::size_t>(H), Matrix());
                for (int h = 0; h < H; ++h) {
                    const std::size_t off = static_cast<std::size_t>(h) * hd;
                    const Matrix a = head_attention(detail::col_slice(q, off, hd),
                                                    detail::col_slice(k, off, hd), scale, &mask);
                    const Matrix v_h = detail::col_slice(v, off, hd);
                    detail::set_col_slice(attn_out, off, matmul(a, v_h));
                    const double* last = a.row(n - 1);
                    for (std::size_t j = 0; j < n; ++j) record.scores[j] += last[j];
                    inherited[static_cast<std::size_t>(h)] = a;
                }
                for (double& s : record.scores) s /= static_cast<double>(H);
                record.layer = l;
                record.step = 0;
                record.positions = layout.positions();
                record.visual_begin = layout.visual_begin();
                record.visual_count = layout.visual_count();
                inherited_record = record;
                cache.keys = k;
                cache.values = v;
            }

            x = add(x, matmul(attn_out, lw.wo));
            x = add(x, detail::gated_mlp(rms_normalize_rows(x), lw));

            cache.n_system = layout.n_system;
            cache.n_instruction = layout.n_instruction;
            cache.visual_positions = layout.visual_original_indices;
            cache.prompt_length = layout.prompt_length();
            cache.generated = 0;

            flops += layer_flops_prefill(static_cast<std::int64_t>(n), m_cfg.model_dim,
                                         m_cfg.mlp_dim, lazy);

            // T bookkeeping: a pruning layer stores the ranked keep list; a
            // layer ahead of the first prune ranks its full visual set by its
            // own record; everything else inherits from the layer below.
            if (!pruned_here) {
                std::vector<int>& ranked = trace.ranked[static_cast<std::size_t>(l)];
                if (!pruned_yet) {
                    Selection sel = select_top(record.visual_scores(), layout.visual_count());
                    ranked.reserve(sel.ranked.size());
                    for (int rel : sel.ranked) {
                        ranked.push_back(layout.visual_original_indices[static_cast<std::size_t>(rel)]);
                    }
                } else {
                    ranked = trace.ranked[static_cast<std::size_t>(l - 1)];
                }
            }

            caches.prefill_visual[static_cast<std::size_t>(l)] = layout.visual_count();
            trace.prefill_visual[static_cast<std::size_t>(l)] = layout.visual_count();
            share_sum += visual_share(record);
            prev_record = record;
            if (opts.record_attention) step_records.push_back(std::move(record));
        }

        std::vector<double> logits = head_logits(x, static_cast<std::size_t>(layout.total()) - 1);
        const int token = argmax(logits);
        trace.tokens.push_back(token);

        StepStat stat;
        stat.step = 0;
        stat.token = token;
        stat.visual_counts = trace.prefill_visual;
        stat.visual_share = share_sum / static_cast<double>(L);
        stat.cumulative_flops = flops;
        trace.steps.push_back(std::move(stat));
        if (opts.record_attention) trace.records.push_back(std::move(step_records));
        if (opts.record_logits) trace.logits.push_back(std::move(logits));
    }

    void decode_step(const Policies& policies, GenerationTrace& trace, KvCacheSet& caches,
                     std::int64_t& flops, int g, const Options& opts) const {
        const int L = m_cfg.num_layers;
        const int H = m_cfg.num_heads;
        const std::size_t hd = static_cast<std::size_t>(m_cfg.head_dim());
        const std::size_t d = static_cast<std::size_t>(m_cfg.model_dim);
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        std::vector<int> visual_counts;
        if (policies.anneal.kind != AttenuationKind::none) {
            visual_counts = anneal_caches(caches, policies.anneal, g);
        } else {
            visual_counts.reserve(static_cast<std::size_t>(L));
            for (const LayerCache& c : caches.layers) visual_counts.push_back(c.visual_count());
        }

        const int token = trace.tokens.back();
        const int position = trace.prompt_length + g - 1;
        Matrix x(1, d);
        {
            const double* e = m_weights.embedding.row(static_cast<std::size_t>(token));
            const std::vector<double> pos =
                sinusoidal_position(static_cast<std::size_t>(position), d);
            for (std::size_t j = 0; j < d; ++j) x.at(0, j) = e[j] + pos[j];
        }

        std::vector<Matrix> inherited;
        AttentionRecord inherited_record;
        double share_sum = 0.0;
        std::vector<AttentionRecord> step_records;

        for (int l = 0; l < L; ++l) {
            const LayerWeights& lw = m_weights.layers[static_cast<std::size_t>(l)];
            const bool lazy = policies.heredity.is_lazy(l);
            LayerCache& cache = caches.layers[static_cast<std::size_t>(l)];
            AttentionRecord record;

            const Matrix x_norm = rms_normalize_rows(x);
            Matrix attn_out(1, d);
            if (lazy) {
                const Matrix v = matmul(x_norm, lw.wv);
                detail::append_row(cache.values, v);
                ++cache.generated;
                for (int h = 0; h < H; ++h) {
                    const std::size_t off = static_cast<std::size_t>(h) * hd;
                    const Matrix v_h = detail::col_slice(cache.values, off, hd);
                    detail::set_col_slice(attn_out, off,
                                          lazy_attention(inherited[static_cast<std::size_t>(h)], v_h));
                }
                record = inherited_record;
                record.layer = l;
            } else {
                const Matrix q = matmul(x_norm, lw.wq);
                detail::append_row(cache.keys, matmul(x_norm, lw.wk));
                detail::append_row(cache.values, matmul(x_norm, lw.wv));
                ++cache.generated;
                const std::size_t c = static_cast<std::size_t>(cache.tokens());
                record.scores.assign(c, 0.0);
                inherited.assign(static_cast<std::size_t>(H), Matrix());
                for (int h = 0; h < H; ++h) {
                    const std::size_t off = static_cast<std::size_t>(h) * hd;
                    const Matrix row = head_attention(detail::col_slice(q, off, hd),
                                                      detail::col_slice(cache.keys, off, hd),
                                                      scale, nullptr);
                    const Matrix v_h = detail::col_slice(cache.values, off, hd);
                    detail::set_col_slice(attn_out, off, matmul(row, v_h));
                    const double* r = row.row(0);
                    for (std::size_t j = 0; j < c; ++j) record.scores[j] += r[j];
                    inherited[static_cast<std::size_t>(h)] = row;
                }
                for (double& s : record.scores) s /= static_cast<double>(H);
                record.layer = l;
                record.step = g;
                record.positions = cache.positions();
                record.visual_begin = cache.visual_begin();
                record.visual_count = cache.visual_count();
                inherited_record = record;
            }

            x = add(x, matmul(attn_out, lw.wo));
            x = add(x, detail::gated_mlp(rms_normalize_rows(x), lw));

            flops += layer_flops_decode(cache.tokens(), m_cfg.model_dim, m_cfg.mlp_dim, lazy);
            share_sum += visual_share(record);
            if (opts.record_attention) step_records.push_back(std::move(record));
        }

        std::vector<double> logits = head_logits(x, 0);
        const int next = argmax(logits);
        trace.tokens.push_back(next);

        StepStat stat;
        stat.step = g;
        stat.token = next;
        stat.visual_counts = std::move(visual_counts);
        stat.visual_share = share_sum / static_cast<double>(L);
        stat.cumulative_flops = flops;
        trace.steps.push_back(std::move(stat));
        if (opts.record_attention) trace.records.push_back(std::move(step_records));
        if (opts.record_logits) trace.logits.push_back(std::move(logits));
    }

    static Matrix add(const Matrix& a, const Matrix& b) {
        if (a.rows != b.rows || a.cols != b.cols) {
            throw state_error("add: shape mismatch");
        }
        Matrix out = a;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        return out;
    }

    ModelConfig m_cfg;
    ModelWeights m_weights;
};

}  // namespace vtrim
