// SPDX-License-Identifier: Apache-2.0
//
// Smallest end-to-end use of the engine: build a toy model, prune visual
// tokens progressively during prefill, anneal the visual KV cache while
// decoding, and print what the cache held at every step.

#include <iostream>

#include "vtrim/model.hpp"

int main() {
    vtrim::ModelConfig cfg;
    cfg.num_layers = 8;
    cfg.model_dim = 64;
    cfg.num_heads = 4;
    cfg.mlp_dim = 128;
    cfg.seed = 7;

    vtrim::DecoderEngine engine(cfg);
    const vtrim::Prompt prompt = engine.make_prompt(4, 20, 6);

    vtrim::Policies policies;
    policies.prune = vtrim::PruneSchedule::pvtp(2, 2, 0.5, 0.1);
    policies.anneal = vtrim::AttenuationSpec::cosine(12.0);

    const vtrim::GenerationTrace trace = engine.generate(prompt, policies, 8);

    std::cout << "tokens:";
    for (int t : trace.tokens) std::cout << ' ' << t;
    std::cout << "\n\nstep  visual tokens per layer\n";
    for (const vtrim::StepStat& s : trace.steps) {
        std::cout << s.step << "    ";
        for (int c : s.visual_counts) std::cout << ' ' << c;
        std::cout << '\n';
    }
    std::cout << "\ntotal flops: " << trace.steps.back().cumulative_flops << '\n';
    return 0;
}
