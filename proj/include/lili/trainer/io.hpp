#pragma once

// Metrics log and interaction CSV formats.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lili/env/types.hpp"
#include "lili/trainer/config.hpp"

namespace lili {

inline constexpr double kNoValue = std::numeric_limits<double>::quiet_NaN();

struct MetricsRow {
    std::size_t interaction = 0;
    double mean_step_reward = 0.0;
    double episode_return = 0.0;
    double success = 0.0;
    double rep_loss = kNoValue;  // NaN when no update ran
    double critic_loss = kNoValue;
    double actor_loss = kNoValue;
    double alpha = 0.0;
    double z_norm = 0.0;
    double ground_strategy = 0.0;
};

inline const char* metrics_header() {
    return "interaction,mean_step_reward,episode_return,success,rep_loss,critic_loss,actor_loss,alpha,z_norm,"
           "ground_strategy";
}

inline std::string format_metrics_row(const MetricsRow& r) {
    using detail::format_double;
    std::string s = std::to_string(r.interaction);
    for (double v : {r.mean_step_reward, r.episode_return, r.success, r.rep_loss, r.critic_loss, r.actor_loss, r.alpha,
                     r.z_norm, r.ground_strategy}) {
        s += ',';
        s += format_double(v);
    }
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline MetricsRow parse_metrics_row(const std::string& line) {
    const auto cells = split_csv_line(line);
    if (cells.size() != 10) throw ConfigError("metrics row has " + std::to_string(cells.size()) + " columns, expected 10");
    auto num = [&](std::size_t k) { return detail::parse_number<double>("metrics column " + std::to_string(k), cells[k]); };
    MetricsRow r;
    r.interaction = detail::parse_number<std::size_t>("metrics column 0", cells[0]);
    r.mean_step_reward = num(1);
    r.episode_return = num(2);
    r.success = num(3);
    r.rep_loss = num(4);
    r.critic_loss = num(5);
    r.actor_loss = num(6);
    r.alpha = num(7);
    r.z_norm = num(8);
    r.ground_strategy = num(9);
    return r;
}

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metrics log " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != metrics_header())
        throw ConfigError(path.string() + ": not a metrics log (header mismatch)");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(parse_metrics_row(line));
    return rows;
}

/// Header of the per-step interaction export; ground-strategy column only with diagnostics.
inline std::string interaction_csv_header(std::size_t obs_dim, std::size_t act_dim, bool diagnostics) {
    std::string h = "interaction,t";
    for (std::size_t d = 0; d < obs_dim; ++d) h += ",s" + std::to_string(d);
    for (std::size_t d = 0; d < act_dim; ++d) h += ",a" + std::to_string(d);
    h += ",r,done";
    if (diagnostics) h += ",ground_strategy";
    return h;
}

inline void write_interaction_rows(std::ostream& os, const Interaction& it, bool diagnostics) {
    for (std::size_t t = 0; t < it.length(); ++t) {
        os << it.index << ',' << t;
        for (double v : it.state(t)) os << ',' << detail::format_double(v);
        for (double v : it.action(t)) os << ',' << detail::format_double(v);
        os << ',' << detail::format_double(it.rewards[t]) << ',' << (t + 1 == it.length() ? 1 : 0);
        if (diagnostics) os << ',' << detail::format_double(strategy_scalar(it.ground));
        os << '\n';
    }
}

}  // namespace lili
