// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtrim/cache.hpp"
#include "vtrim/errors.hpp"

namespace vtrim {

// Floats in CSV output carry 9 significant digits; NaN spells "nan".
inline std::string format_g9(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string format_hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw state_error("cannot open for writing: " + path.string());
    }
    out << content;
    if (!out) {
        throw state_error("write failed: " + path.string());
    }
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw config_error("cannot open: " + path.string());
    }
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

// Attention records round-trip through a small JSON sidecar so analysis can
// run on previously written traces. `meta` carries the bits of run context
// the analyze command needs for its defaults.
struct RecordsFile {
    int num_layers = 0;
    int default_overlap_layer = 0;
    std::vector<std::vector<AttentionRecord>> steps;  // [step][layer]
};

inline nlohmann::json records_to_json(const RecordsFile& file) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& layer_records : file.steps) {
        nlohmann::json layers = nlohmann::json::array();
        for (const AttentionRecord& r : layer_records) {
            layers.push_back({{"layer", r.layer},
                              {"step", r.step},
                              {"scores", r.scores},
                              {"positions", r.positions},
                              {"visual_begin", r.visual_begin},
                              {"visual_count", r.visual_count}});
        }
        steps.push_back(std::move(layers));
    }
    return {{"version", 1},
            {"num_layers", file.num_layers},
            {"default_overlap_layer", file.default_overlap_layer},
            {"steps", std::move(steps)}};
}

inline RecordsFile records_from_json(const nlohmann::json& j) {
    RecordsFile file;
    try {
        if (j.at("version").get<int>() != 1) {
            throw config_error("records: unsupported version");
        }
        file.num_layers = j.at("num_layers").get<int>();
        file.default_overlap_layer = j.at("default_overlap_layer").get<int>();
        for (const nlohmann::json& layers : j.at("steps")) {
            std::vector<AttentionRecord> step;
            for (const nlohmann::json& r : layers) {
                AttentionRecord rec;
                rec.layer = r.at("layer").get<int>();
                rec.step = r.at("step").get<std::int64_t>();
                rec.scores = r.at("scores").get<std::vector<double>>();
                rec.positions = r.at("positions").get<std::vector<int>>();
                rec.visual_begin = r.at("visual_begin").get<int>();
                rec.visual_count = r.at("visual_count").get<int>();
                step.push_back(std::move(rec));
            }
            file.steps.push_back(std::move(step));
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("records: malformed file: ") + e.what());
    }
    return file;
}

}  // namespace vtrim
