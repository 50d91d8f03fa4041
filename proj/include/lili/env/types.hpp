#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lili/autodiff/tensor.hpp"

namespace lili {

enum class EnvId { point_mass, driving, hockey };

inline std::string to_string(EnvId id) {
    switch (id) {
        case EnvId::point_mass: return "point_mass";
        case EnvId::driving: return "driving";
        case EnvId::hockey: return "hockey";
    }
    return "?";
}

inline EnvId parse_env_id(const std::string& s) {
    if (s == "point_mass") return EnvId::point_mass;
    if (s == "driving") return EnvId::driving;
    if (s == "hockey") return EnvId::hockey;
    throw ConfigError("unknown environment '" + s + "' (expected point_mass, driving or hockey)");
}

/// Target angle on the Point Mass circle, radians in [0, 2pi).
struct TargetAngle {
    double radians = 0.0;
    bool operator==(const TargetAngle&) const = default;
};

/// Lane the Driving opponent merges into: 0 (x < 0) or 1 (x > 0).
struct MergeLane {
    int lane = 0;
    bool operator==(const MergeLane&) const = default;
};

/// Where the hockey striker aims.
enum class StrikeMode { left, middle, right };

inline std::string to_string(StrikeMode m) {
    switch (m) {
        case StrikeMode::left: return "left";
        case StrikeMode::middle: return "middle";
        case StrikeMode::right: return "right";
    }
    return "?";
}

inline StrikeMode parse_strike_mode(const std::string& s) {
    if (s == "left") return StrikeMode::left;
    if (s == "middle") return StrikeMode::middle;
    if (s == "right") return StrikeMode::right;
    throw ConfigError("unknown strike mode '" + s + "'");
}

/// The other agent's true strategy for one interaction. Diagnostics and oracle use only.
using GroundStrategy = std::variant<TargetAngle, MergeLane, StrikeMode>;

inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a < 0.0) a += two_pi;
    if (a >= two_pi) a = 0.0;
    return a;
}

/// Signed angular difference a - b folded into (-pi, pi].
inline double angle_diff(double a, double b) {
    double d = wrap_angle(a - b);
    if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
    return d;
}

/// Numeric encoding used in logs: angle, lane index, or mode index.
inline double strategy_scalar(const GroundStrategy& g) {
    if (auto* t = std::get_if<TargetAngle>(&g)) return t->radians;
    if (auto* l = std::get_if<MergeLane>(&g)) return l->lane;
    return static_cast<double>(std::get<StrikeMode>(g));
}

struct EnvSpec {
    EnvId id = EnvId::point_mass;
    int horizon = 50;
    bool oracle = false;
    double noise_sigma = 0.0;  // multiple of the nominal strategy step
    int history = 1;

    // Point Mass
    double circle_radius = 3.0;
    double start_x = 2.0;
    double start_y = 0.0;
    double max_speed = 0.5;
    double angle_step = 0.2;
    double arena_radius = 5.0;

    // Driving
    double lane_offset = 0.5;      // lane centres at +-lane_offset
    double lateral_speed = 0.25;
    double car_width = 0.7;
    double car_length = 0.6;
    double start_gap = 1.5;
    double closing_speed = 0.3;
    int merge_step = 4;

    // Hockey
    double board_half_width = 1.0;
    double paddle_speed = 0.06;
    double aim_offset = 0.5;
    double block_threshold = 0.1;
    double distance_cost = 0.05;

    [[nodiscard]] std::size_t strategy_obs_dim() const {
        switch (id) {
            case EnvId::point_mass: return 2;
            case EnvId::driving: return 2;
            case EnvId::hockey: return 3;
        }
        return 0;
    }
    [[nodiscard]] std::size_t base_obs_dim() const {
        switch (id) {
            case EnvId::point_mass: return 2;
            case EnvId::driving: return 4;
            case EnvId::hockey: return 2;
        }
        return 0;
    }
    [[nodiscard]] std::size_t obs_dim() const { return base_obs_dim() + (oracle ? strategy_obs_dim() : 0); }
    [[nodiscard]] std::size_t action_dim() const { return id == EnvId::point_mass ? 2 : 1; }

    void validate() const {
        if (horizon < 1) throw ConfigError("env.horizon must be >= 1");
        if (noise_sigma < 0.0) throw ConfigError("env.noise must be >= 0");
        if (history < 1) throw ConfigError("env.history must be >= 1");
        for (double g : {circle_radius, max_speed, angle_step, arena_radius, lane_offset, lateral_speed, car_width,
                         car_length, start_gap, closing_speed, board_half_width, paddle_speed, block_threshold})
            if (!(g > 0.0)) throw ConfigError("environment geometry constants must be strictly positive");
        if (distance_cost < 0.0) throw ConfigError("env.distance_cost must be >= 0");
        if (id == EnvId::hockey && aim_offset + block_threshold > board_half_width)
            throw ConfigError("hockey aim targets must lie on the board");
    }

    bool operator==(const EnvSpec&) const = default;
};

/// Default geometry and horizon for each environment.
inline EnvSpec make_env_spec(EnvId id) {
    EnvSpec s;
    s.id = id;
    switch (id) {
        case EnvId::point_mass: s.horizon = 50; break;
        case EnvId::driving: s.horizon = 10; break;
        case EnvId::hockey: s.horizon = 20; break;
    }
    return s;
}

/// What the strategy machine is allowed to see about a finished interaction.
struct EpisodeSummary {
    double ego_x = 0.0;
    double ego_y = 0.0;
    bool ended_inside = false;  // Point Mass
    int lane = 0;               // Driving: lane the ego finished in
    double puck_x = 0.0;        // Hockey
    bool success = false;       // reached / passed / blocked
    bool operator==(const EpisodeSummary&) const = default;
};

/// One episode's trajectory, stored flat.
struct Interaction {
    std::size_t index = 0;
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    std::vector<double> states;   // (length + 1) x obs_dim
    std::vector<double> actions;  // length x act_dim
    std::vector<double> rewards;  // length
    bool terminated_early = false;
    EpisodeSummary summary;
    GroundStrategy ground;                  // diagnostics channel
    std::vector<double> next_initial_obs;  // first observation of the following interaction
    std::vector<double> latent;            // z the policy was conditioned on

    [[nodiscard]] std::size_t length() const noexcept { return rewards.size(); }
    [[nodiscard]] std::span<const double> state(std::size_t t) const {
        return std::span<const double>(states).subspan(t * obs_dim, obs_dim);
    }
    [[nodiscard]] std::span<const double> action(std::size_t t) const {
        return std::span<const double>(actions).subspan(t * act_dim, act_dim);
    }
    [[nodiscard]] double episode_return() const {
        double s = 0.0;
        for (double r : rewards) s += r;
        return s;
    }
};

}  // namespace lili
