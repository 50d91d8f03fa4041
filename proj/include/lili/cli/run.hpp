#pragma once

// Run directories: config.ini, manifest.json, metrics.csv, checkpoint.bin.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lili/trainer/trainer.hpp"

namespace lili::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kOutputRootEnv = "LILI_OUTPUT_ROOT";

/// $LILI_OUTPUT_ROOT, or ./runs when unset or empty.
inline fs::path output_root() {
    const char* v = std::getenv(kOutputRootEnv);
    return (v && *v) ? fs::path(v) : fs::path("runs");
}

inline std::string default_run_name(const RunConfig& c) {
    return to_string(c.env.id) + "_" + to_string(c.algorithm) + "_s" + std::to_string(c.seed);
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
}

inline json config_json(const RunConfig& c) {
    json j = json::object();
    for (const auto& k : config_keys()) j[k] = get_config_value(c, k);
    return j;
}

/// Manifest contents; `status` is one of running, completed, diverged.
inline json make_manifest(const RunConfig& c, const std::string& status, std::size_t completed) {
    const char* root = std::getenv(kOutputRootEnv);
    return json{{"format", "lili-run/1"},
                {"env", to_string(c.env.id)},
                {"algorithm", to_string(c.algorithm)},
                {"seed", c.seed},
                {"output_root_env", kOutputRootEnv},
                {"output_root", root ? std::string(root) : std::string()},
                {"status", status},
                {"interactions_completed", completed},
                {"config", config_json(c)}};
}

inline RunConfig load_run_config(const fs::path& dir) {
    if (!fs::exists(dir / "config.ini")) throw ConfigError(dir.string() + ": not a run directory (no config.ini)");
    return parse_config(read_text(dir / "config.ini"));
}

inline json load_manifest(const fs::path& dir) {
    try {
        return json::parse(read_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw ConfigError((dir / "manifest.json").string() + ": " + e.what());
    }
}

/// Trains `cfg` into `dir`. The manifest is written before training starts
/// and rewritten with the final status; DivergenceError propagates.
inline TrainResult run_training(const RunConfig& cfg, const fs::path& dir,
                                const std::function<void(const MetricsRow&)>& progress = {}) {
    cfg.validate();
    fs::create_directories(dir);
    write_text(dir / "config.ini", serialize_config(cfg));
    write_text(dir / "manifest.json", make_manifest(cfg, "running", 0).dump(2) + "\n");
    std::size_t done = 0;
    auto count = [&](const MetricsRow& r) {
        ++done;
        if (progress) progress(r);
    };
    try {
        auto res = train(cfg, dir, count);
        write_text(dir / "manifest.json", make_manifest(cfg, "completed", res.interactions).dump(2) + "\n");
        return res;
    } catch (const DivergenceError& e) {
        auto m = make_manifest(cfg, "diverged", done);
        m["error"] = e.what();
        write_text(dir / "manifest.json", m.dump(2) + "\n");
        throw;
    }
}

/// True when `dir` holds a completed run of exactly `cfg`.
inline bool run_is_complete(const fs::path& dir, const RunConfig& cfg) {
    if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "config.ini") || !fs::exists(dir / "checkpoint.bin"))
        return false;
    try {
        return load_manifest(dir).value("status", "") == "completed" && load_run_config(dir) == cfg;
    } catch (const ConfigError&) {
        return false;
    }
}

}  // namespace lili::cli
