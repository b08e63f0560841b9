// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <filesystem>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtrim/analytics.hpp"
#include "vtrim/config.hpp"
#include "vtrim/cost.hpp"
#include "vtrim/errors.hpp"
#include "vtrim/io.hpp"
#include "vtrim/model.hpp"

namespace vtrim {

inline nlohmann::json cost_report_to_json(const CostReport& report) {
    return {{"prefill_flops", report.prefill_flops},
            {"decode_flops", report.decode_flops},
            {"total_flops", report.total_flops},
            {"kv_bytes_per_step", report.kv_bytes_per_step},
            {"peak_kv_bytes", report.peak_kv_bytes},
            {"prefill_visual", report.prefill_visual},
            {"step_visual", report.step_visual}};
}

// The layer the analyze command ranks overlap on when not told otherwise:
// the layer whose record feeds the first prune, or an early full-set layer
// when nothing prunes.
inline int default_overlap_layer(const RunConfig& cfg) {
    const PruneSchedule& s = cfg.policies.prune;
    const int L = cfg.model.num_layers;
    switch (s.kind) {
        case PruneKind::pvtp: return s.start_layer - 1;
        case PruneKind::fastv_like: return s.fastv_layer - 1;
        case PruneKind::vtw_like: return std::max(0, s.resolved_cut(L) - 1);
        case PruneKind::none: break;
    }
    return std::min(2, L - 1);
}

// run: generate once, write trace.csv + summary.json (+ records.json).
inline GenerationTrace cmd_run(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    DecoderEngine engine(cfg.model);
    const Prompt prompt = engine.make_prompt(cfg.n_system, cfg.n_visual, cfg.n_instruction);
    DecoderEngine::Options opts;
    opts.record_attention = cfg.record_attention;
    const GenerationTrace trace = engine.generate(prompt, cfg.policies, cfg.max_new_tokens, opts);

    const CostReport cost = pipeline_flops(cfg.cost_config(), cfg.policies.prune,
                                           cfg.policies.anneal, cfg.policies.heredity,
                                           cfg.max_new_tokens - 1);

    const int L = cfg.model.num_layers;
    std::ostringstream csv;
    csv << "step,token_id";
    for (int l = 0; l < L; ++l) csv << ",visual_cache_" << l;
    csv << ",visual_share,cumulative_flops\n";
    for (const StepStat& s : trace.steps) {
        csv << s.step << ',' << s.token;
        for (int c : s.visual_counts) csv << ',' << c;
        csv << ',' << format_g9(s.visual_share) << ',' << s.cumulative_flops << '\n';
    }
    write_text_file(out_dir / "trace.csv", csv.str());

    nlohmann::json summary = {{"config", to_json(cfg)},
                              {"tokens", trace.tokens},
                              {"checksum", format_hex64(trace.checksum())},
                              {"clamp_warnings", trace.clamp_warnings},
                              {"cost", cost_report_to_json(cost)}};
    write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");

    if (cfg.record_attention) {
        RecordsFile file;
        file.num_layers = L;
        file.default_overlap_layer = default_overlap_layer(cfg);
        file.steps = trace.records;
        write_text_file(out_dir / "records.json", records_to_json(file).dump() + "\n");
    }
    return trace;
}

struct SweepSpec {
    std::vector<int> strides;
    std::int64_t final_keep_ppm = 10'000;  // 1%
    std::vector<double> horizons;          // optional tau/sigma grid
    std::vector<std::vector<int>> lazy_sets;  // optional heredity grid
};

struct SweepRow {
    int stride = 0;
    std::int64_t step_ratio_ppm = -1;
    std::int64_t first_ratio_ppm = 0;
    std::int64_t final_keep_ppm = 0;
    std::optional<double> horizon;
    std::vector<int> lazy;
    std::int64_t total_flops = 0;
    std::int64_t peak_kv_bytes = 0;
    double wall_clock_ms = 0.0;
    std::uint64_t checksum = 0;
    bool skipped = false;
    std::string reason;
};

namespace detail {

inline std::string join_lazy(const std::vector<int>& lazy) {
    std::string out;
    for (std::size_t i = 0; i < lazy.size(); ++i) {
        if (i) out += '|';
        out += std::to_string(lazy[i]);
    }
    return out;
}

// Reason strings land in the last CSV column; commas inside them would
// shift fields, so they become semicolons.
inline std::string csv_safe(std::string s) {
    for (char& c : s) {
        if (c == ',') c = ';';
    }
    return s;
}

}  // namespace detail

// sweep: grid over stride (step ratio derived from the fixed final keep
// fraction), attenuation horizon and lazy sets. One engine run per valid
// point; points execute in parallel, rows emit in grid order.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& base, const SweepSpec& spec,
                                       const std::filesystem::path& out_dir,
                                       const std::string& format) {
    base.validate();
    if (base.policies.prune.kind != PruneKind::pvtp) {
        throw config_error("sweep: the stride grid requires prune.kind = pvtp");
    }
    if (spec.final_keep_ppm < 0 || spec.final_keep_ppm > kPpmScale) {
        throw config_error("sweep: final keep fraction must lie in [0, 1]");
    }
    if (!spec.horizons.empty() && base.policies.anneal.kind == AttenuationKind::none) {
        throw config_error("sweep: a horizon grid requires an annealing kind");
    }
    std::filesystem::create_directories(out_dir);

    const int L = base.model.num_layers;
    const std::int64_t first = base.policies.prune.first_ratio_ppm;

    struct Point {
        SweepRow row;
        std::optional<RunConfig> cfg;
    };
    std::vector<Point> points;
    const std::vector<double> horizon_axis =
        spec.horizons.empty() ? std::vector<double>{-1.0} : spec.horizons;
    const std::vector<std::vector<int>> lazy_axis =
        spec.lazy_sets.empty() ? std::vector<std::vector<int>>{base.policies.heredity.lazy_layers}
                               : spec.lazy_sets;

    for (int stride : spec.strides) {
        SweepRow proto;
        proto.stride = stride;
        proto.first_ratio_ppm = first;
        proto.final_keep_ppm = spec.final_keep_ppm;

        std::optional<std::int64_t> step_ppm;
        std::string reason;
        if (stride < 1) {
            reason = "stride must be >= 1";
        } else {
            PruneSchedule probe = base.policies.prune;
            probe.stride = stride;
            const std::int64_t budget = kPpmScale - first - spec.final_keep_ppm;
            const int steps = probe.later_prune_steps(L);
            if (budget < 0) {
                reason = "final keep fraction exceeds the first prune's remainder";
            } else if (steps == 0) {
                if (budget == 0) {
                    step_ppm = 0;
                } else {
                    reason = "stride admits no later prune layers";
                }
            } else if (budget % steps != 0) {
                reason = "step ratio not representable for this stride";
            } else if (budget / steps > kPpmScale) {
                reason = "step ratio exceeds 100%";
            } else {
                step_ppm = budget / steps;
            }
        }

        for (double horizon : horizon_axis) {
            for (const std::vector<int>& lazy : lazy_axis) {
                Point point;
                point.row = proto;
                if (!spec.horizons.empty()) point.row.horizon = horizon;
                point.row.lazy = lazy;
                if (!step_ppm) {
                    point.row.skipped = true;
                    point.row.reason = reason;
                    points.push_back(std::move(point));
                    continue;
                }
                point.row.step_ratio_ppm = *step_ppm;
                RunConfig cfg = base;
                cfg.policies.prune.stride = stride;
                cfg.policies.prune.step_ratio_ppm = *step_ppm;
                if (!spec.horizons.empty()) {
                    if (cfg.policies.anneal.kind == AttenuationKind::exponential) {
                        cfg.policies.anneal.sigma = horizon;
                    } else {
                        cfg.policies.anneal.tau = horizon;
                    }
                }
                cfg.policies.heredity.lazy_layers = lazy;
                try {
                    cfg.validate();
                    point.cfg = std::move(cfg);
                } catch (const config_error& e) {
                    point.row.skipped = true;
                    point.row.reason = e.what();
                }
                points.push_back(std::move(point));
            }
        }
    }

    // One shared model; each point owns its generation state.
    const DecoderEngine engine(base.model);
    const Prompt prompt = engine.make_prompt(base.n_system, base.n_visual, base.n_instruction);

    auto run_point = [&engine, &prompt](Point& point) {
        if (!point.cfg) return;
        const RunConfig& cfg = *point.cfg;
        DecoderEngine::Options opts;
        opts.record_attention = false;
        const auto t0 = std::chrono::steady_clock::now();
        const GenerationTrace trace =
            engine.generate(prompt, cfg.policies, cfg.max_new_tokens, opts);
        const auto t1 = std::chrono::steady_clock::now();
        point.row.wall_clock_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        point.row.checksum = trace.checksum();
        const CostReport cost = pipeline_flops(cfg.cost_config(), cfg.policies.prune,
                                               cfg.policies.anneal, cfg.policies.heredity,
                                               cfg.max_new_tokens - 1);
        point.row.total_flops = cost.total_flops;
        point.row.peak_kv_bytes = cost.peak_kv_bytes;
    };

    std::vector<std::future<void>> workers;
    workers.reserve(points.size());
    for (Point& point : points) {
        workers.push_back(std::async(std::launch::async, run_point, std::ref(point)));
    }
    for (auto& w : workers) w.get();

    std::vector<SweepRow> rows;
    rows.reserve(points.size());
    for (Point& point : points) rows.push_back(std::move(point.row));

    std::ostringstream csv;
    csv << "s,r,p,c,tau,lazy,total_flops,peak_kv_bytes,wall_clock_ms,trace_checksum,status,reason\n";
    nlohmann::json jrows = nlohmann::json::array();
    for (const SweepRow& row : rows) {
        const std::string r_str =
            row.step_ratio_ppm >= 0 ? format_g9(ppm_to_ratio(row.step_ratio_ppm)) : "";
        const std::string tau_str = row.horizon ? format_g9(*row.horizon) : "";
        csv << row.stride << ',' << r_str << ',' << format_g9(ppm_to_ratio(row.first_ratio_ppm))
            << ',' << format_g9(ppm_to_ratio(row.final_keep_ppm)) << ',' << tau_str << ','
            << detail::join_lazy(row.lazy) << ',';
        if (row.skipped) {
            csv << ",,,," << "skipped," << detail::csv_safe(row.reason) << '\n';
        } else {
            csv << row.total_flops << ',' << row.peak_kv_bytes << ','
                << format_g9(row.wall_clock_ms) << ',' << format_hex64(row.checksum) << ",ok,\n";
        }
        nlohmann::json jr = {{"s", row.stride},
                             {"p", ppm_to_ratio(row.first_ratio_ppm)},
                             {"c", ppm_to_ratio(row.final_keep_ppm)},
                             {"lazy", row.lazy},
                             {"status", row.skipped ? "skipped" : "ok"}};
        if (row.step_ratio_ppm >= 0) jr["r"] = ppm_to_ratio(row.step_ratio_ppm);
        if (row.horizon) jr["tau"] = *row.horizon;
        if (row.skipped) {
            jr["reason"] = row.reason;
        } else {
            jr["total_flops"] = row.total_flops;
            jr["peak_kv_bytes"] = row.peak_kv_bytes;
            jr["wall_clock_ms"] = row.wall_clock_ms;
            jr["trace_checksum"] = format_hex64(row.checksum);
        }
        jrows.push_back(std::move(jr));
    }
    if (format == "json") {
        write_text_file(out_dir / "sweep.json", jrows.dump(2) + "\n");
    } else {
        write_text_file(out_dir / "sweep.csv", csv.str());
    }
    return rows;
}

struct AnalyzeOptions {
    int step = 0;
    int overlap_layer = -1;  // -1: use the default recorded with the trace
    int overlap_k = -1;      // -1: half of the first step's visual count
};

// analyze: read a run's records.json, emit similarity / share / overlap CSVs.
inline void cmd_analyze(const std::filesystem::path& run_path,
                        const std::filesystem::path& out_dir, const AnalyzeOptions& opts) {
    std::filesystem::path records_path = run_path;
    if (std::filesystem::is_directory(run_path)) {
        records_path = run_path / "records.json";
    }
    if (!std::filesystem::exists(records_path)) {
        throw config_error("analyze: no attention records at " + records_path.string() +
                           " (was the run recorded with record_attention?)");
    }
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(read_text_file(records_path));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("analyze: cannot parse records: ") + e.what());
    }
    const RecordsFile file = records_from_json(parsed);
    if (file.steps.empty()) {
        throw config_error("analyze: records hold no steps");
    }
    if (opts.step < 0 || static_cast<std::size_t>(opts.step) >= file.steps.size()) {
        throw config_error("analyze: step out of range");
    }
    std::filesystem::create_directories(out_dir);
    const int L = file.num_layers;

    const Matrix sim = similarity_matrix(file.steps[static_cast<std::size_t>(opts.step)]);
    std::ostringstream simcsv;
    simcsv << "layer";
    for (int l = 0; l < L; ++l) simcsv << ',' << l;
    simcsv << '\n';
    for (int i = 0; i < L; ++i) {
        simcsv << i;
        for (int j = 0; j < L; ++j) {
            simcsv << ',' << format_g9(sim.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
        }
        simcsv << '\n';
    }
    write_text_file(out_dir / ("similarity_step" + std::to_string(opts.step) + ".csv"),
                    simcsv.str());

    std::ostringstream sharecsv;
    sharecsv << "step";
    for (int l = 0; l < L; ++l) sharecsv << ",layer_" << l;
    sharecsv << ",mean\n";
    for (std::size_t t = 0; t < file.steps.size(); ++t) {
        sharecsv << t;
        double sum = 0.0;
        for (const AttentionRecord& rec : file.steps[t]) {
            const double share = visual_share(rec);
            sum += share;
            sharecsv << ',' << format_g9(share);
        }
        sharecsv << ',' << format_g9(sum / static_cast<double>(L)) << '\n';
    }
    write_text_file(out_dir / "visual_share.csv", sharecsv.str());

    const int layer = opts.overlap_layer >= 0 ? opts.overlap_layer : file.default_overlap_layer;
    if (layer < 0 || layer >= L) {
        throw config_error("analyze: overlap layer out of range");
    }
    std::vector<StepVisualScores> series;
    series.reserve(file.steps.size());
    for (const auto& step : file.steps) {
        const AttentionRecord& rec = step[static_cast<std::size_t>(layer)];
        series.push_back({rec.visual_positions(), rec.visual_scores()});
    }
    std::ostringstream overlapcsv;
    overlapcsv << "step,overlap\n";
    const int first_visual = static_cast<int>(series.front().scores.size());
    if (first_visual > 0) {
        const int k = opts.overlap_k > 0 ? opts.overlap_k : std::max(1, first_visual / 2);
        const std::vector<double> overlap = overlap_series(series, k);
        for (std::size_t t = 0; t < overlap.size(); ++t) {
            overlapcsv << t << ',' << format_g9(overlap[t]) << '\n';
        }
    }
    write_text_file(out_dir / "overlap.csv", overlapcsv.str());
}

// cost: evaluate the analytic model only; no engine run.
inline CostReport cmd_cost(const RunConfig& cfg, const std::filesystem::path& out_dir,
                           const std::string& format) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const CostReport report = pipeline_flops(cfg.cost_config(), cfg.policies.prune,
                                             cfg.policies.anneal, cfg.policies.heredity,
                                             cfg.max_new_tokens - 1);
    if (format == "json") {
        nlohmann::json j = cost_report_to_json(report);
        j["config"] = to_json(cfg);
        write_text_file(out_dir / "cost.json", j.dump(2) + "\n");
        return report;
    }
    std::ostringstream csv;
    csv << "step,flops,kv_bytes,visual_tokens\n";
    for (std::size_t g = 0; g < report.kv_bytes_per_step.size(); ++g) {
        std::int64_t visual = 0;
        const std::vector<int>& counts =
            g == 0 ? report.prefill_visual : report.step_visual[g - 1];
        for (int c : counts) visual += c;
        const std::int64_t flops = g == 0 ? report.prefill_flops : report.decode_flops[g - 1];
        csv << g << ',' << flops << ',' << report.kv_bytes_per_step[g] << ',' << visual << '\n';
    }
    write_text_file(out_dir / "cost.csv", csv.str());
    return report;
}

}  // namespace vtrim
