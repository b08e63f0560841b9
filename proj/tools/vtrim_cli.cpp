// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vtrim/cli.hpp"
#include "vtrim/config.hpp"
#include "vtrim/errors.hpp"
#include "vtrim/io.hpp"

namespace {

// A ratio flag accepts "0.1225" or "12.25%"; both feed the same parser the
// config file uses.
nlohmann::json ratio_json(const std::string& s) {
    if (!s.empty() && s.back() == '%') return nlohmann::json(s);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return nlohmann::json(v);
    } catch (const std::exception&) {
    }
    return nlohmann::json(s);  // let parse_ratio produce the error message
}

struct ConfigFlags {
    std::string config_path;
    std::string seed, layers, dim, heads, mlp_dim, vocab, max_positions;
    std::string n_system, n_visual, n_instruction;
    std::string prune_kind, start_layer, stride, first_ratio, step_ratio;
    std::string fastv_layer, fastv_ratio, vtw_cut_layer;
    std::string anneal_kind, tau, sigma;
    std::vector<int> lazy_layers;
    bool lazy_set = false;
    std::string max_new_tokens, batch, kv_bytes_per_element;
    bool no_records = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; flags override its values");
    cmd->add_option("--seed", f.seed, "master seed for weights and prompt");
    cmd->add_option("--layers", f.layers, "decoder layer count");
    cmd->add_option("--dim", f.dim, "model width");
    cmd->add_option("--heads", f.heads, "attention head count");
    cmd->add_option("--mlp-dim", f.mlp_dim, "MLP hidden width");
    cmd->add_option("--vocab", f.vocab, "vocabulary size");
    cmd->add_option("--max-positions", f.max_positions, "position table size");
    cmd->add_option("--system", f.n_system, "system token count");
    cmd->add_option("--visual", f.n_visual, "visual token count");
    cmd->add_option("--instruction", f.n_instruction, "instruction token count");
    cmd->add_option("--prune", f.prune_kind, "prune kind: none|pvtp|fastv_like|vtw_like");
    cmd->add_option("--start-layer", f.start_layer, "pvtp first prune layer");
    cmd->add_option("--stride", f.stride, "pvtp layers between prunes");
    cmd->add_option("--first-ratio", f.first_ratio, "pvtp first prune fraction (0.5 or 50%)");
    cmd->add_option("--step-ratio", f.step_ratio, "pvtp later prune fraction");
    cmd->add_option("--fastv-layer", f.fastv_layer, "fastv_like prune layer");
    cmd->add_option("--fastv-ratio", f.fastv_ratio, "fastv_like prune fraction");
    cmd->add_option("--vtw-cut-layer", f.vtw_cut_layer, "vtw_like cut layer (-1: midpoint)");
    cmd->add_option("--anneal", f.anneal_kind, "attenuation kind: none|cosine|linear|exponential");
    cmd->add_option("--tau", f.tau, "cosine/linear horizon in generated tokens");
    cmd->add_option("--sigma", f.sigma, "exponential scale in generated tokens");
    cmd->add_option("--lazy", f.lazy_layers, "lazy layer list")
        ->delimiter(',')
        ->each([&f](const std::string&) { f.lazy_set = true; });
    cmd->add_option("--max-new-tokens", f.max_new_tokens, "tokens to generate (prefill included)");
    cmd->add_option("--batch", f.batch, "batch size for the memory model");
    cmd->add_option("--kv-bytes", f.kv_bytes_per_element, "bytes per KV element");
    cmd->add_flag("--no-records", f.no_records, "skip writing attention records");
}

template <typename T>
void set_int(nlohmann::json& obj, const char* key, const std::string& text) {
    if (text.empty()) return;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        obj[key] = static_cast<T>(v);
    } catch (const std::exception&) {
        throw vtrim::config_error(std::string("flag value for ") + key + " is not an integer: " + text);
    }
}

void set_double(nlohmann::json& obj, const char* key, const std::string& text) {
    if (text.empty()) return;
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        obj[key] = v;
    } catch (const std::exception&) {
        throw vtrim::config_error(std::string("flag value for ") + key + " is not a number: " + text);
    }
}

vtrim::RunConfig build_config(const ConfigFlags& f) {
    nlohmann::json j = nlohmann::json::object();
    if (!f.config_path.empty()) {
        try {
            j = nlohmann::json::parse(vtrim::read_text_file(f.config_path));
        } catch (const nlohmann::json::exception& e) {
            throw vtrim::config_error(std::string("config: cannot parse ") + f.config_path + ": " +
                                      e.what());
        }
    }
    set_int<std::uint64_t>(j, "seed", f.seed);
    set_int<int>(j, "max_new_tokens", f.max_new_tokens);
    if (f.no_records) j["record_attention"] = false;

    set_int<int>(j["model"], "layers", f.layers);
    set_int<int>(j["model"], "dim", f.dim);
    set_int<int>(j["model"], "heads", f.heads);
    set_int<int>(j["model"], "mlp_dim", f.mlp_dim);
    set_int<int>(j["model"], "vocab", f.vocab);
    set_int<int>(j["model"], "max_positions", f.max_positions);
    if (j["model"].empty()) j.erase("model");

    set_int<int>(j["prompt"], "system", f.n_system);
    set_int<int>(j["prompt"], "visual", f.n_visual);
    set_int<int>(j["prompt"], "instruction", f.n_instruction);
    if (j["prompt"].empty()) j.erase("prompt");

    if (!f.prune_kind.empty()) j["prune"]["kind"] = f.prune_kind;
    set_int<int>(j["prune"], "start_layer", f.start_layer);
    set_int<int>(j["prune"], "stride", f.stride);
    if (!f.first_ratio.empty()) j["prune"]["first_ratio"] = ratio_json(f.first_ratio);
    if (!f.step_ratio.empty()) j["prune"]["step_ratio"] = ratio_json(f.step_ratio);
    set_int<int>(j["prune"], "fastv_layer", f.fastv_layer);
    if (!f.fastv_ratio.empty()) j["prune"]["fastv_ratio"] = ratio_json(f.fastv_ratio);
    set_int<int>(j["prune"], "vtw_cut_layer", f.vtw_cut_layer);
    if (j["prune"].empty()) j.erase("prune");

    if (!f.anneal_kind.empty()) j["anneal"]["kind"] = f.anneal_kind;
    set_double(j["anneal"], "tau", f.tau);
    set_double(j["anneal"], "sigma", f.sigma);
    if (j["anneal"].empty()) j.erase("anneal");

    if (f.lazy_set) j["heredity"]["lazy_layers"] = f.lazy_layers;
    if (j.contains("heredity") && j["heredity"].empty()) j.erase("heredity");

    set_int<int>(j["cost"], "batch", f.batch);
    set_int<int>(j["cost"], "kv_bytes_per_element", f.kv_bytes_per_element);
    if (j["cost"].empty()) j.erase("cost");

    return vtrim::parse_config(j);
}

std::vector<std::vector<int>> parse_lazy_sets(const std::vector<std::string>& sets) {
    std::vector<std::vector<int>> out;
    for (const std::string& set : sets) {
        std::vector<int> layers;
        std::string token;
        for (char c : set + "|") {
            if (c == '|') {
                if (!token.empty()) {
                    try {
                        layers.push_back(std::stoi(token));
                    } catch (const std::exception&) {
                        throw vtrim::config_error("sweep: bad lazy layer \"" + token + "\"");
                    }
                    token.clear();
                }
            } else {
                token += c;
            }
        }
        out.push_back(std::move(layers));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visual-token trimming pipeline: generation, sweeps, analytics, cost model"};
    app.require_subcommand(1);

    ConfigFlags flags;
    std::string out_dir = "out";
    std::string format = "csv";

    CLI::App* run = app.add_subcommand("run", "generate once and write trace/summary/records");
    add_config_flags(run, flags);
    run->add_option("--out-dir", out_dir, "output directory");

    CLI::App* sweep = app.add_subcommand("sweep", "grid over stride, horizon and lazy sets");
    add_config_flags(sweep, flags);
    sweep->add_option("--out-dir", out_dir, "output directory");
    std::vector<int> strides;
    std::string final_keep = "1%";
    std::vector<double> horizons;
    std::vector<std::string> lazy_sets;
    sweep->add_option("--strides", strides, "stride grid")->delimiter(',');
    sweep->add_option("--final-keep", final_keep, "final-layer keep fraction each point must land on");
    sweep->add_option("--horizons", horizons, "attenuation horizon grid")->delimiter(',');
    sweep->add_option("--lazy-sets", lazy_sets, "lazy layer sets, e.g. 8|9,20")->delimiter(',');
    sweep->add_option("--format", format, "sweep output format: csv|json")
        ->check(CLI::IsMember({"csv", "json"}));

    CLI::App* analyze = app.add_subcommand("analyze", "similarity/share/overlap tables from records");
    std::string run_path;
    vtrim::AnalyzeOptions aopts;
    analyze->add_option("--run", run_path, "run directory or records.json path")->required();
    analyze->add_option("--out-dir", out_dir, "output directory");
    analyze->add_option("--step", aopts.step, "step for the similarity matrix");
    analyze->add_option("--overlap-layer", aopts.overlap_layer, "layer for the overlap series");
    analyze->add_option("--overlap-k", aopts.overlap_k, "top-k size for the overlap series");

    CLI::App* cost = app.add_subcommand("cost", "evaluate the analytic cost model only");
    add_config_flags(cost, flags);
    cost->add_option("--out-dir", out_dir, "output directory");
    cost->add_option("--format", format, "cost output format: csv|json")
        ->check(CLI::IsMember({"csv", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const vtrim::RunConfig cfg = build_config(flags);
            const vtrim::GenerationTrace trace = vtrim::cmd_run(cfg, out_dir);
            std::cout << "tokens:";
            for (int t : trace.tokens) std::cout << ' ' << t;
            std::cout << "\nchecksum: " << vtrim::format_hex64(trace.checksum()) << '\n';
            if (trace.clamp_warnings > 0) {
                std::cerr << "warning: " << trace.clamp_warnings
                          << " keep-count clamp(s) during pruning\n";
            }
        } else if (sweep->parsed()) {
            vtrim::RunConfig cfg = build_config(flags);
            if (flags.prune_kind.empty() && cfg.policies.prune.kind == vtrim::PruneKind::none) {
                cfg.policies.prune.kind = vtrim::PruneKind::pvtp;
            }
            vtrim::SweepSpec spec;
            spec.strides = strides;
            spec.final_keep_ppm =
                vtrim::ratio_to_ppm(vtrim::parse_ratio(ratio_json(final_keep)));
            spec.horizons = horizons;
            spec.lazy_sets = parse_lazy_sets(lazy_sets);
            const auto rows = vtrim::cmd_sweep(cfg, spec, out_dir, format);
            int ok = 0, skipped = 0;
            for (const auto& r : rows) (r.skipped ? skipped : ok)++;
            std::cout << "sweep: " << ok << " point(s), " << skipped << " skipped\n";
        } else if (analyze->parsed()) {
            vtrim::cmd_analyze(run_path, out_dir, aopts);
            std::cout << "analysis written to " << out_dir << '\n';
        } else if (cost->parsed()) {
            const vtrim::RunConfig cfg = build_config(flags);
            const vtrim::CostReport report = vtrim::cmd_cost(cfg, out_dir, format);
            std::cout << "prefill_flops: " << report.prefill_flops
                      << "\ntotal_flops: " << report.total_flops
                      << "\npeak_kv_bytes: " << report.peak_kv_bytes << '\n';
        }
    } catch (const vtrim::config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
