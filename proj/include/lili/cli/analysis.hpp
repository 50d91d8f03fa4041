#pragma once

// Summary statistics over metrics logs.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lili/trainer/io.hpp"
#include "lili/trainer/trainer.hpp"

namespace lili::cli {

struct MeanSe {
    double mean = kNoValue;
    double se = kNoValue;  // NaN below two samples
    std::size_t n = 0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe out;
    out.n = xs.size();
    if (xs.empty()) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
    return out;
}

/// Rows whose interaction index falls in the last `k` interactions logged.
inline std::vector<MetricsRow> final_rows(const std::vector<MetricsRow>& rows, std::size_t k) {
    if (rows.empty()) return {};
    const std::size_t last = rows.back().interaction;
    const std::size_t first = last + 1 >= k ? last + 1 - k : 0;
    std::vector<MetricsRow> out;
    for (const auto& r : rows)
        if (r.interaction >= first) out.push_back(r);
    return out;
}

inline double final_mean_step_reward(const std::vector<MetricsRow>& rows, std::size_t k) {
    std::vector<double> v;
    for (const auto& r : final_rows(rows, k)) v.push_back(r.mean_step_reward);
    return mean_se(v).mean;
}

inline double final_success_rate(const std::vector<MetricsRow>& rows, std::size_t k) {
    std::vector<double> v;
    for (const auto& r : final_rows(rows, k)) v.push_back(r.success);
    return mean_se(v).mean;
}

inline double final_mean_return(const std::vector<MetricsRow>& rows, std::size_t k) {
    std::vector<double> v;
    for (const auto& r : final_rows(rows, k)) v.push_back(r.episode_return);
    return mean_se(v).mean;
}

/// Fraction of the final `k` interactions per strategy bin (angle bins, lanes or modes).
inline std::vector<double> final_occupancy(const std::vector<MetricsRow>& rows, std::size_t k, EnvId env) {
    std::vector<double> occ(occupancy_labels(env).size(), 0.0);
    const auto tail = final_rows(rows, k);
    for (const auto& r : tail) occ[occupancy_bin(env, r.ground_strategy)] += 1.0;
    for (auto& o : occ) o /= std::max<double>(1.0, static_cast<double>(tail.size()));
    return occ;
}

/// Fraction of Point Mass target angles within `radius` of `centre` over the final `k` interactions.
inline double final_angle_mass(const std::vector<MetricsRow>& rows, std::size_t k, double centre, double radius) {
    const auto tail = final_rows(rows, k);
    if (tail.empty()) return kNoValue;
    double in = 0.0;
    for (const auto& r : tail) in += std::abs(angle_diff(r.ground_strategy, centre)) <= radius ? 1.0 : 0.0;
    return in / static_cast<double>(tail.size());
}

/// Trailing moving average; entry i averages values [max(0, i - w + 1), i].
inline std::vector<double> trailing_average(const std::vector<double>& v, std::size_t w) {
    std::vector<double> out(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += v[i];
        if (i >= w) s -= v[i - w];
        out[i] = s / static_cast<double>(std::min(i + 1, w));
    }
    return out;
}

}  // namespace lili::cli
