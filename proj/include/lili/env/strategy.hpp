#pragma once

#include <random>
#include <span>
#include <variant>

#include "lili/env/types.hpp"

namespace lili {

enum class PuckSide { left, right };

/// Left iff the puck finished strictly left of the ego paddle; ties go right.
inline PuckSide side_of_puck(const EpisodeSummary& s) { return s.puck_x < s.ego_x ? PuckSide::left : PuckSide::right; }

inline PuckSide side_of_puck(const Interaction& it) {
    if (!std::holds_alternative<StrikeMode>(it.ground)) throw UsageError("side_of_puck needs a hockey interaction");
    return side_of_puck(it.summary);
}

/// Striker aims away from the ego's last blocking spot.
inline StrikeMode next_strike_mode(StrikeMode current, PuckSide side) {
    const bool left = side == PuckSide::left;
    switch (current) {
        case StrikeMode::left: return left ? StrikeMode::middle : StrikeMode::right;
        case StrikeMode::middle: return left ? StrikeMode::left : StrikeMode::right;
        case StrikeMode::right: return left ? StrikeMode::middle : StrikeMode::left;
    }
    return current;
}

/// Direction of the Point Mass target's next move: +1 counterclockwise, -1 clockwise.
///
/// With a one-interaction memory, ending inside the circle sends the target
/// clockwise. With longer memories the target goes counterclockwise when the
/// ego ended inside in a strict majority of the remembered interactions.
inline int point_mass_direction(std::span<const EpisodeSummary> history, int memory) {
    if (memory <= 1) return history.back().ended_inside ? -1 : +1;
    const auto n = std::min<std::size_t>(history.size(), static_cast<std::size_t>(memory));
    std::size_t inside = 0;
    for (std::size_t k = history.size() - n; k < history.size(); ++k) inside += history[k].ended_inside ? 1 : 0;
    return 2 * inside > n ? +1 : -1;
}

/// Strategy for the next interaction. `history` is ordered oldest first and
/// holds at most spec.history summaries; an empty history leaves the strategy unchanged.
template <class Rng>
GroundStrategy advance_strategy(const EnvSpec& spec, const GroundStrategy& current,
                                std::span<const EpisodeSummary> history, Rng& rng) {
    if (history.empty()) return current;
    switch (spec.id) {
        case EnvId::point_mass: {
            double step = spec.angle_step;
            if (spec.noise_sigma > 0.0) {
                std::normal_distribution<double> xi(0.0, spec.noise_sigma);
                step *= 1.0 + xi(rng);
            }
            const int dir = point_mass_direction(history, spec.history);
            return TargetAngle{wrap_angle(std::get<TargetAngle>(current).radians + dir * step)};
        }
        case EnvId::driving: return MergeLane{history.back().lane};
        case EnvId::hockey: return next_strike_mode(std::get<StrikeMode>(current), side_of_puck(history.back()));
    }
    return current;
}

}  // namespace lili
