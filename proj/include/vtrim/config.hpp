// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtrim/errors.hpp"
#include "vtrim/model.hpp"

namespace vtrim {

// One run of the engine, as configured on disk or on the command line.
// The file format is versioned JSON; unknown keys are rejected so typos
// fail loudly instead of silently running defaults.
struct RunConfig {
    int version = 1;
    std::uint64_t seed = 1;
    ModelConfig model;
    int n_system = 8;
    int n_visual = 20;
    int n_instruction = 8;
    Policies policies;
    int max_new_tokens = 16;
    bool record_attention = true;
    int batch = 1;
    int kv_bytes_per_element = 2;

    void validate() const {
        if (version != 1) {
            throw config_error("config: unsupported version " + std::to_string(version));
        }
        model.validate();
        policies.validate(model.num_layers);
        if (n_system < 0 || n_visual < 0 || n_instruction < 0) {
            throw config_error("config: prompt segment lengths must be non-negative");
        }
        if (max_new_tokens < 1) {
            throw config_error("config: max_new_tokens must be >= 1");
        }
        if (batch < 1 || kv_bytes_per_element < 1) {
            throw config_error("config: batch and kv_bytes_per_element must be positive");
        }
    }

    CostConfig cost_config() const {
        CostConfig c;
        c.num_layers = model.num_layers;
        c.model_dim = model.model_dim;
        c.mlp_dim = model.mlp_dim;
        c.n_visual = n_visual;
        c.n_text = n_system + n_instruction;
        c.batch = batch;
        c.kv_bytes_per_element = kv_bytes_per_element;
        return c;
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) {
            throw config_error("config: unknown key \"" + item.key() + "\" in " + where);
        }
    }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error(std::string("config: bad value for \"") + key + "\"");
    }
}

}  // namespace detail

// Ratio fields accept a fraction (0.1225) or a percent string ("12.25%").
inline double parse_ratio(const nlohmann::json& v) {
    double fraction = 0.0;
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s.empty() || s.back() != '%') {
            throw config_error("config: ratio string must end in '%': \"" + s + "\"");
        }
        s.pop_back();
        std::size_t used = 0;
        try {
            fraction = std::stod(s, &used) / 100.0;
        } catch (const std::exception&) {
            throw config_error("config: cannot parse percentage \"" + s + "%\"");
        }
        if (used != s.size()) {
            throw config_error("config: cannot parse percentage \"" + s + "%\"");
        }
    } else if (v.is_number()) {
        fraction = v.get<double>();
    } else {
        throw config_error("config: ratio must be a number or a percent string");
    }
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw config_error("config: ratio out of range [0, 1]");
    }
    return fraction;
}

inline PruneKind parse_prune_kind(const std::string& s) {
    if (s == "none") return PruneKind::none;
    if (s == "pvtp") return PruneKind::pvtp;
    if (s == "fastv_like") return PruneKind::fastv_like;
    if (s == "vtw_like") return PruneKind::vtw_like;
    throw config_error("config: unknown prune kind \"" + s + "\"");
}

inline AttenuationKind parse_attenuation_kind(const std::string& s) {
    if (s == "none") return AttenuationKind::none;
    if (s == "cosine") return AttenuationKind::cosine;
    if (s == "linear") return AttenuationKind::linear;
    if (s == "exponential") return AttenuationKind::exponential;
    throw config_error("config: unknown attenuation kind \"" + s + "\"");
}

inline RunConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw config_error("config: top level must be an object");
    }
    detail::reject_unknown_keys(j,
                                {"version", "seed", "model", "prompt", "prune", "anneal", "heredity",
                                 "max_new_tokens", "record_attention", "cost"},
                                "top level");
    RunConfig cfg;
    cfg.version = detail::get_or(j, "version", 1);
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 1);

    if (j.contains("model")) {
        const nlohmann::json& m = j.at("model");
        detail::reject_unknown_keys(
            m, {"layers", "dim", "heads", "mlp_dim", "vocab", "max_positions"}, "model");
        cfg.model.num_layers = detail::get_or(m, "layers", cfg.model.num_layers);
        cfg.model.model_dim = detail::get_or(m, "dim", cfg.model.model_dim);
        cfg.model.num_heads = detail::get_or(m, "heads", cfg.model.num_heads);
        cfg.model.mlp_dim = detail::get_or(m, "mlp_dim", cfg.model.mlp_dim);
        cfg.model.vocab_size = detail::get_or(m, "vocab", cfg.model.vocab_size);
        cfg.model.max_positions = detail::get_or(m, "max_positions", cfg.model.max_positions);
    }
    cfg.model.seed = cfg.seed;

    if (j.contains("prompt")) {
        const nlohmann::json& p = j.at("prompt");
        detail::reject_unknown_keys(p, {"system", "visual", "instruction"}, "prompt");
        cfg.n_system = detail::get_or(p, "system", cfg.n_system);
        cfg.n_visual = detail::get_or(p, "visual", cfg.n_visual);
        cfg.n_instruction = detail::get_or(p, "instruction", cfg.n_instruction);
    }

    if (j.contains("prune")) {
        const nlohmann::json& p = j.at("prune");
        detail::reject_unknown_keys(p,
                                    {"kind", "start_layer", "stride", "step_ratio", "first_ratio",
                                     "fastv_layer", "fastv_ratio", "vtw_cut_layer"},
                                    "prune");
        PruneSchedule& s = cfg.policies.prune;
        s.kind = parse_prune_kind(detail::get_or<std::string>(p, "kind", "none"));
        s.start_layer = detail::get_or(p, "start_layer", s.start_layer);
        s.stride = detail::get_or(p, "stride", s.stride);
        if (p.contains("first_ratio")) s.first_ratio_ppm = ratio_to_ppm(parse_ratio(p.at("first_ratio")));
        if (p.contains("step_ratio")) s.step_ratio_ppm = ratio_to_ppm(parse_ratio(p.at("step_ratio")));
        s.fastv_layer = detail::get_or(p, "fastv_layer", s.fastv_layer);
        if (p.contains("fastv_ratio")) s.fastv_ratio_ppm = ratio_to_ppm(parse_ratio(p.at("fastv_ratio")));
        s.vtw_cut_layer = detail::get_or(p, "vtw_cut_layer", s.vtw_cut_layer);
    }

    if (j.contains("anneal")) {
        const nlohmann::json& a = j.at("anneal");
        detail::reject_unknown_keys(a, {"kind", "tau", "sigma"}, "anneal");
        AttenuationSpec& s = cfg.policies.anneal;
        s.kind = parse_attenuation_kind(detail::get_or<std::string>(a, "kind", "none"));
        s.tau = detail::get_or(a, "tau", s.tau);
        s.sigma = detail::get_or(a, "sigma", s.sigma);
    }

    if (j.contains("heredity")) {
        const nlohmann::json& h = j.at("heredity");
        detail::reject_unknown_keys(h, {"lazy_layers"}, "heredity");
        cfg.policies.heredity.lazy_layers =
            detail::get_or<std::vector<int>>(h, "lazy_layers", {});
    }

    if (j.contains("cost")) {
        const nlohmann::json& c = j.at("cost");
        detail::reject_unknown_keys(c, {"batch", "kv_bytes_per_element"}, "cost");
        cfg.batch = detail::get_or(c, "batch", cfg.batch);
        cfg.kv_bytes_per_element = detail::get_or(c, "kv_bytes_per_element", cfg.kv_bytes_per_element);
    }

    cfg.max_new_tokens = detail::get_or(j, "max_new_tokens", cfg.max_new_tokens);
    cfg.record_attention = detail::get_or(j, "record_attention", cfg.record_attention);
    cfg.validate();
    return cfg;
}

inline nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["version"] = cfg.version;
    j["seed"] = cfg.seed;
    j["model"] = {{"layers", cfg.model.num_layers},     {"dim", cfg.model.model_dim},
                  {"heads", cfg.model.num_heads},       {"mlp_dim", cfg.model.mlp_dim},
                  {"vocab", cfg.model.vocab_size},      {"max_positions", cfg.model.max_positions}};
    j["prompt"] = {{"system", cfg.n_system}, {"visual", cfg.n_visual}, {"instruction", cfg.n_instruction}};
    const PruneSchedule& s = cfg.policies.prune;
    j["prune"] = {{"kind", to_string(s.kind)},
                  {"start_layer", s.start_layer},
                  {"stride", s.stride},
                  {"first_ratio", ppm_to_ratio(s.first_ratio_ppm)},
                  {"step_ratio", ppm_to_ratio(s.step_ratio_ppm)},
                  {"fastv_layer", s.fastv_layer},
                  {"fastv_ratio", ppm_to_ratio(s.fastv_ratio_ppm)},
                  {"vtw_cut_layer", s.vtw_cut_layer}};
    const AttenuationSpec& a = cfg.policies.anneal;
    j["anneal"] = {{"kind", to_string(a.kind)}, {"tau", a.tau}, {"sigma", a.sigma}};
    j["heredity"] = {{"lazy_layers", cfg.policies.heredity.lazy_layers}};
    j["cost"] = {{"batch", cfg.batch}, {"kv_bytes_per_element", cfg.kv_bytes_per_element}};
    j["max_new_tokens"] = cfg.max_new_tokens;
    j["record_attention"] = cfg.record_attention;
    return j;
}

}  // namespace vtrim
