#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <variant>
#include <vector>

#include "lili/env/types.hpp"

namespace lili {

struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;
};

/// One repeated-interaction environment instance.
///
/// The ground strategy passed to reset() stays fixed until the episode ends.
/// Point Mass: ego integrates a box-bounded velocity toward a hidden target
/// on a circle. Driving: ego steers laterally while the other car, ahead,
/// merges into a lane at `merge_step`. Hockey: a 1-D paddle meets a puck
/// descending along a straight line toward the aimed-at side.
class Environment {
public:
    explicit Environment(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

    [[nodiscard]] const EnvSpec& spec() const noexcept { return spec_; }

    std::vector<double> reset(const GroundStrategy& strategy) {
        check_strategy(strategy);
        ground_ = strategy;
        t_ = 0;
        done_ = false;
        started_ = true;
        aim_shift_ = 0.0;
        collided_ = false;
        blocked_ = false;
        switch (spec_.id) {
            case EnvId::point_mass: {
                ego_x_ = spec_.start_x;
                ego_y_ = spec_.start_y;
                const double th = std::get<TargetAngle>(ground_).radians;
                target_x_ = spec_.circle_radius * std::cos(th);
                target_y_ = spec_.circle_radius * std::sin(th);
                break;
            }
            case EnvId::driving:
                ego_x_ = 0.0;
                ego_y_ = -spec_.start_gap;
                other_x_ = 0.0;
                other_y_ = 0.0;
                break;
            case EnvId::hockey:
                ego_x_ = 0.0;
                puck_x_ = 0.0;
                break;
        }
        return observe();
    }

    StepResult step(std::span<const double> action) {
        if (!started_) throw UsageError("step called before reset");
        if (done_) throw UsageError("step called after the interaction finished");
        if (action.size() != spec_.action_dim()) throw ConfigError("action has the wrong dimension");
        ++t_;
        StepResult out;
        switch (spec_.id) {
            case EnvId::point_mass: out.reward = step_point_mass(action); break;
            case EnvId::driving: out.reward = step_driving(action[0]); break;
            case EnvId::hockey: out.reward = step_hockey(action[0]); break;
        }
        if (t_ >= spec_.horizon) done_ = true;
        out.done = done_;
        out.obs = observe();
        return out;
    }

    [[nodiscard]] bool done() const noexcept { return done_; }
    [[nodiscard]] bool terminated_early() const noexcept { return done_ && t_ < spec_.horizon; }
    [[nodiscard]] int t() const noexcept { return t_; }
    [[nodiscard]] const GroundStrategy& ground() const noexcept { return ground_; }

    [[nodiscard]] double ego_x() const noexcept { return ego_x_; }
    [[nodiscard]] double ego_y() const noexcept { return ego_y_; }
    [[nodiscard]] double puck_x() const noexcept { return puck_x_; }
    [[nodiscard]] double puck_y() const noexcept { return 1.0 - static_cast<double>(t_) / spec_.horizon; }
    [[nodiscard]] double other_x() const noexcept { return other_x_; }
    [[nodiscard]] double other_y() const noexcept { return other_y_; }
    [[nodiscard]] bool collided() const noexcept { return collided_; }
    [[nodiscard]] bool blocked() const noexcept { return blocked_; }

    /// Hockey only: redirects the puck for the rest of the flight.
    void nudge_aim(double dx) {
        if (spec_.id != EnvId::hockey) throw UsageError("nudge_aim is a hockey control");
        aim_shift_ = std::clamp(aim_shift_ + dx, -spec_.block_threshold, spec_.block_threshold);
    }

    /// Final-state facts exposed to the strategy machine.
    [[nodiscard]] EpisodeSummary summary() const {
        if (!done_) throw UsageError("summary requested before the interaction finished");
        EpisodeSummary s;
        s.ego_x = ego_x_;
        s.ego_y = ego_y_;
        switch (spec_.id) {
            case EnvId::point_mass:
                s.ended_inside = std::hypot(ego_x_, ego_y_) < spec_.circle_radius;
                s.success = std::hypot(ego_x_ - target_x_, ego_y_ - target_y_) < 0.25;
                break;
            case EnvId::driving:
                s.lane = ego_x_ < 0.0 ? 0 : 1;
                s.success = !collided_;
                break;
            case EnvId::hockey:
                s.puck_x = puck_x_;
                s.success = blocked_;
                break;
        }
        return s;
    }

    /// Observation the ego sees; the oracle flag appends the strategy encoding.
    [[nodiscard]] std::vector<double> observe() const {
        std::vector<double> o;
        o.reserve(spec_.obs_dim());
        switch (spec_.id) {
            case EnvId::point_mass: o = {ego_x_, ego_y_}; break;
            case EnvId::driving: o = {ego_x_, ego_y_, other_x_, other_y_}; break;
            case EnvId::hockey: o = {ego_x_, puck_y()}; break;
        }
        if (spec_.oracle) {
            const auto extra = strategy_features(spec_, ground_);
            o.insert(o.end(), extra.begin(), extra.end());
        }
        return o;
    }

    /// Oracle encoding: target xy, lane one-hot, or mode one-hot.
    static std::vector<double> strategy_features(const EnvSpec& spec, const GroundStrategy& g) {
        switch (spec.id) {
            case EnvId::point_mass: {
                const double th = std::get<TargetAngle>(g).radians;
                return {spec.circle_radius * std::cos(th), spec.circle_radius * std::sin(th)};
            }
            case EnvId::driving: {
                const int lane = std::get<MergeLane>(g).lane;
                return {lane == 0 ? 1.0 : 0.0, lane == 1 ? 1.0 : 0.0};
            }
            case EnvId::hockey: {
                const auto m = std::get<StrikeMode>(g);
                return {m == StrikeMode::left ? 1.0 : 0.0, m == StrikeMode::middle ? 1.0 : 0.0,
                        m == StrikeMode::right ? 1.0 : 0.0};
            }
        }
        return {};
    }

    /// Lateral coordinate the striker aims at for `mode`.
    [[nodiscard]] double aim_x(StrikeMode mode) const {
        switch (mode) {
            case StrikeMode::left: return -spec_.aim_offset;
            case StrikeMode::middle: return 0.0;
            case StrikeMode::right: return spec_.aim_offset;
        }
        return 0.0;
    }

private:
    void check_strategy(const GroundStrategy& g) const {
        bool ok = false;
        switch (spec_.id) {
            case EnvId::point_mass: ok = std::holds_alternative<TargetAngle>(g); break;
            case EnvId::driving:
                ok = std::holds_alternative<MergeLane>(g) &&
                     (std::get<MergeLane>(g).lane == 0 || std::get<MergeLane>(g).lane == 1);
                break;
            case EnvId::hockey: ok = std::holds_alternative<StrikeMode>(g); break;
        }
        if (!ok) throw ConfigError("ground strategy does not belong to environment " + to_string(spec_.id));
    }

    double step_point_mass(std::span<const double> a) {
        ego_x_ += spec_.max_speed * std::clamp(a[0], -1.0, 1.0);
        ego_y_ += spec_.max_speed * std::clamp(a[1], -1.0, 1.0);
        const double r = std::hypot(ego_x_, ego_y_);
        if (r > spec_.arena_radius) {
            ego_x_ *= spec_.arena_radius / r;
            ego_y_ *= spec_.arena_radius / r;
        }
        return -std::hypot(ego_x_ - target_x_, ego_y_ - target_y_);
    }

    double step_driving(double a) {
        const double bound = 2.0 * spec_.lane_offset;
        ego_x_ = std::clamp(ego_x_ + spec_.lateral_speed * std::clamp(a, -1.0, 1.0), -bound, bound);
        const double other_speed = 0.2;
        other_y_ += other_speed;
        ego_y_ += other_speed + spec_.closing_speed;
        if (t_ >= spec_.merge_step) {
            const double goal = std::get<MergeLane>(ground_).lane == 0 ? -spec_.lane_offset : spec_.lane_offset;
            other_x_ = goal;
        }
        const bool overlap_long = std::abs(other_y_ - ego_y_) < spec_.car_length;
        const bool overlap_lat = std::abs(other_x_ - ego_x_) < spec_.car_width;
        if (overlap_long && overlap_lat) {
            collided_ = true;
            done_ = true;
            return -1.0;
        }
        return 0.0;
    }

    double step_hockey(double a) {
        const double w = spec_.board_half_width;
        ego_x_ = std::clamp(ego_x_ + spec_.paddle_speed * std::clamp(a, -1.0, 1.0), -w, w);
        const auto mode = std::get<StrikeMode>(ground_);
        const double frac = static_cast<double>(t_) / spec_.horizon;
        puck_x_ = std::clamp((aim_x(mode) + aim_shift_) * frac, -w, w);
        const double gap = std::abs(ego_x_ - puck_x_);
        double r = -spec_.distance_cost * gap;
        if (t_ >= spec_.horizon) {
            blocked_ = gap <= spec_.block_threshold;
            if (blocked_) r += mode == StrikeMode::left ? 2.0 : 1.0;
        }
        return r;
    }

    EnvSpec spec_;
    GroundStrategy ground_{TargetAngle{}};
    int t_ = 0;
    bool done_ = false;
    bool started_ = false;
    double ego_x_ = 0.0, ego_y_ = 0.0;
    double target_x_ = 0.0, target_y_ = 0.0;
    double other_x_ = 0.0, other_y_ = 0.0;
    double puck_x_ = 0.0;
    double aim_shift_ = 0.0;
    bool collided_ = false;
    bool blocked_ = false;
};

}  // namespace lili
