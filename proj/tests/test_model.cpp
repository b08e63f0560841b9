// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "vtrim/cost.hpp"
#include "vtrim/model.hpp"

using namespace vtrim;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.num_layers = 6;
    cfg.model_dim = 32;
    cfg.num_heads = 4;
    cfg.mlp_dim = 64;
    cfg.vocab_size = 96;
    cfg.max_positions = 64;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("one seed pins weights and prompts bit for bit") {
    const ModelConfig cfg = small_config();
    const DecoderEngine a(cfg);
    const DecoderEngine b(cfg);
    CHECK(a.weights().embedding == b.weights().embedding);
    CHECK(a.weights().lm_head == b.weights().lm_head);
    CHECK(a.weights().layers[3].wq == b.weights().layers[3].wq);
    CHECK(a.weights().layers[5].w_down == b.weights().layers[5].w_down);

    const Prompt pa = a.make_prompt(2, 8, 3);
    const Prompt pb = b.make_prompt(2, 8, 3);
    CHECK(pa.embeddings == pb.embeddings);
    CHECK(pa.token_ids == pb.token_ids);

    ModelConfig other = cfg;
    other.seed = 12;
    const DecoderEngine c(other);
    CHECK_FALSE(c.weights().embedding == a.weights().embedding);
}

TEST_CASE("prompt rows mark visual slots and stay inside the vocabulary") {
    const ModelConfig cfg = small_config();
    const DecoderEngine engine(cfg);
    const Prompt prompt = engine.make_prompt(2, 5, 3);

    REQUIRE(prompt.token_ids.size() == 10);
    REQUIRE(prompt.embeddings.rows == 10);
    CHECK(prompt.embeddings.cols == 32);
    for (int i = 0; i < 10; ++i) {
        const int id = prompt.token_ids[static_cast<std::size_t>(i)];
        if (i >= 2 && i < 7) {
            CHECK(id == -1);
        } else {
            CHECK(id >= 0);
            CHECK(id < cfg.vocab_size);
        }
    }
    CHECK(all_finite(prompt.embeddings));
    CHECK(prompt.layout.positions() == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

    CHECK_THROWS_AS(engine.make_prompt(0, 0, 0), config_error);
    ModelConfig tiny = cfg;
    tiny.max_positions = 8;
    const DecoderEngine cramped(tiny);
    CHECK_THROWS_AS(cramped.make_prompt(2, 5, 3), config_error);
}

TEST_CASE("model configuration rejects inconsistent shapes") {
    ModelConfig cfg = small_config();
    cfg.model_dim = 30;  // not divisible by 4 heads
    CHECK_THROWS_AS(DecoderEngine(cfg), config_error);
    cfg = small_config();
    cfg.vocab_size = 1;
    CHECK_THROWS_AS(DecoderEngine(cfg), config_error);
}

TEST_CASE("trace shapes, monotone flops and repeatability") {
    const ModelConfig cfg = small_config();
    const DecoderEngine engine(cfg);
    const Prompt prompt = engine.make_prompt(2, 8, 3);
    Policies pol;
    pol.prune = PruneSchedule::pvtp(2, 2, 0.50, 0.125);
    pol.anneal = AttenuationSpec::cosine(6.0);

    const GenerationTrace trace = engine.generate(prompt, pol, 5);
    REQUIRE(trace.tokens.size() == 5);
    REQUIRE(trace.steps.size() == 5);
    REQUIRE(trace.records.size() == 5);
    CHECK(trace.prompt_length == 13);
    for (int g = 0; g < 5; ++g) {
        const StepStat& s = trace.steps[static_cast<std::size_t>(g)];
        CHECK(s.step == g);
        CHECK(s.token == trace.tokens[static_cast<std::size_t>(g)]);
        REQUIRE(s.visual_counts.size() == 6);
        CHECK(s.visual_share >= 0.0);
        CHECK(s.visual_share <= 1.0);
        CHECK(trace.records[static_cast<std::size_t>(g)].size() == 6);
        if (g > 0) {
            CHECK(s.cumulative_flops >
                  trace.steps[static_cast<std::size_t>(g - 1)].cumulative_flops);
        }
    }

    const GenerationTrace again = engine.generate(prompt, pol, 5);
    CHECK(again.tokens == trace.tokens);
    CHECK(again.checksum() == trace.checksum());
    for (int g = 0; g < 5; ++g) {
        CHECK(again.steps[static_cast<std::size_t>(g)].cumulative_flops ==
              trace.steps[static_cast<std::size_t>(g)].cumulative_flops);
    }

    DecoderEngine::Options opts;
    opts.record_attention = false;
    const GenerationTrace bare = engine.generate(prompt, pol, 5, opts);
    CHECK(bare.records.empty());
    CHECK(bare.logits.empty());
    CHECK(bare.tokens == trace.tokens);
}

TEST_CASE("pruned prefill matches the schedule closed form") {
    const ModelConfig cfg = small_config();
    const DecoderEngine engine(cfg);
    const Prompt prompt = engine.make_prompt(2, 12, 3);
    Policies pol;
    pol.prune = PruneSchedule::pvtp(1, 2, 0.50, 0.25);

    const GenerationTrace trace = engine.generate(prompt, pol, 2);
    CHECK(trace.prefill_visual == schedule_keep_counts(pol.prune, 6, 12));
    CHECK(trace.prefill_visual == std::vector<int>{12, 6, 6, 3, 3, 0});
    for (int l = 0; l < 6; ++l) {
        CHECK(static_cast<int>(trace.ranked[static_cast<std::size_t>(l)].size()) ==
              trace.prefill_visual[static_cast<std::size_t>(l)]);
    }

    // The retained set each layer saw is the ranked list in position order.
    for (int l : {1, 3}) {
        const AttentionRecord& rec = trace.records[0][static_cast<std::size_t>(l)];
        std::vector<int> expected = trace.ranked[static_cast<std::size_t>(l)];
        std::sort(expected.begin(), expected.end());
        CHECK(rec.visual_positions() == expected);
    }
}

TEST_CASE("engine flop counter agrees with the analytic pipeline") {
    const ModelConfig cfg = small_config();
    const DecoderEngine engine(cfg);
    const Prompt prompt = engine.make_prompt(2, 8, 3);

    CostConfig cost_cfg;
    cost_cfg.num_layers = cfg.num_layers;
    cost_cfg.model_dim = cfg.model_dim;
    cost_cfg.mlp_dim = cfg.mlp_dim;
    cost_cfg.n_visual = 8;
    cost_cfg.n_text = 5;

    std::vector<Policies> combos(4);
    combos[1].prune = PruneSchedule::pvtp(2, 2, 0.50, 0.125);
    combos[1].anneal = AttenuationSpec::cosine(6.0);
    combos[2].prune = PruneSchedule::fastv(2, 0.50);
    combos[2].anneal = AttenuationSpec::linear(8.0);
    combos[2].heredity.lazy_layers = {3};
    combos[3].prune = PruneSchedule::vtw(3);
    combos[3].anneal = AttenuationSpec::exponential(4.0);

    for (const Policies& pol : combos) {
        const GenerationTrace trace = engine.generate(prompt, pol, 6);
        const CostReport report =
            pipeline_flops(cost_cfg, pol.prune, pol.anneal, pol.heredity, 5);

        CHECK(trace.prefill_visual == report.prefill_visual);
        CHECK(trace.steps[0].cumulative_flops == report.prefill_flops);
        for (int g = 1; g <= 5; ++g) {
            const StepStat& s = trace.steps[static_cast<std::size_t>(g)];
            CHECK(s.visual_counts == report.step_visual[static_cast<std::size_t>(g - 1)]);
            CHECK(s.cumulative_flops -
                      trace.steps[static_cast<std::size_t>(g - 1)].cumulative_flops ==
                  report.decode_flops[static_cast<std::size_t>(g - 1)]);
        }
        CHECK(trace.steps.back().cumulative_flops == report.total_flops);
    }
}

TEST_CASE("an emptied visual cache still decodes") {
    const ModelConfig cfg = small_config();
    const DecoderEngine engine(cfg);
    const Prompt prompt = engine.make_prompt(2, 8, 3);
    Policies pol;
    pol.prune = PruneSchedule::vtw(3);

    const GenerationTrace trace = engine.generate(prompt, pol, 4);
    CHECK(trace.prefill_visual == std::vector<int>{8, 8, 8, 0, 0, 0});
    REQUIRE(trace.tokens.size() == 4);
    for (const StepStat& s : trace.steps) {
        CHECK(s.visual_counts[5] == 0);
    }
}

TEST_CASE("recorded logits reproduce the emitted tokens") {
    const ModelConfig cfg = small_config();
    const DecoderEngine engine(cfg);
    const Prompt prompt = engine.make_prompt(2, 6, 3);
    DecoderEngine::Options opts;
    opts.record_logits = true;

    const GenerationTrace trace = engine.generate(prompt, Policies{}, 4, opts);
    REQUIRE(trace.logits.size() == 4);
    for (int g = 0; g < 4; ++g) {
        const std::vector<double>& logits = trace.logits[static_cast<std::size_t>(g)];
        REQUIRE(static_cast<int>(logits.size()) == cfg.vocab_size);
        CHECK(argmax(logits) == trace.tokens[static_cast<std::size_t>(g)]);
    }

    const GenerationTrace one = engine.generate(prompt, Policies{}, 1);
    CHECK(one.tokens.size() == 1);
    CHECK(one.steps.size() == 1);
}

TEST_CASE("generation rejects impossible requests") {
    const ModelConfig cfg = small_config();
    const DecoderEngine engine(cfg);
    const Prompt prompt = engine.make_prompt(2, 8, 3);

    CHECK_THROWS_AS(engine.generate(prompt, Policies{}, 0), config_error);

    ModelConfig tight = cfg;
    tight.max_positions = 16;
    const DecoderEngine cramped(tight);
    const Prompt short_prompt = cramped.make_prompt(2, 8, 3);
    CHECK_THROWS_AS(cramped.generate(short_prompt, Policies{}, 4), config_error);

    Policies bad_prune;
    bad_prune.prune = PruneSchedule::pvtp(6, 2, 0.50, 0.125);
    CHECK_THROWS_AS(engine.generate(prompt, bad_prune, 2), config_error);

    Policies bad_lazy;
    bad_lazy.heredity.lazy_layers = {0};
    CHECK_THROWS_AS(engine.generate(prompt, bad_lazy, 2), config_error);
}
