#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lili/autodiff/adam.hpp"
#include "lili/env/types.hpp"
#include "lili/latent/model.hpp"
#include "lili/sac/sac.hpp"

namespace lili {

enum class Algorithm { lili, lili_no_influence, sac, oracle };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::lili: return "lili";
        case Algorithm::lili_no_influence: return "lili_no_influence";
        case Algorithm::sac: return "sac";
        case Algorithm::oracle: return "oracle";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "lili") return Algorithm::lili;
    if (s == "lili_no_influence") return Algorithm::lili_no_influence;
    if (s == "sac") return Algorithm::sac;
    if (s == "oracle") return Algorithm::oracle;
    throw ConfigError("run.algorithm: unknown value '" + s + "' (expected lili, lili_no_influence, sac or oracle)");
}

[[nodiscard]] inline bool uses_latent(Algorithm a) { return a == Algorithm::lili || a == Algorithm::lili_no_influence; }
[[nodiscard]] inline bool bootstraps_across(Algorithm a) { return a == Algorithm::lili || a == Algorithm::oracle; }

struct RunConfig {
    Algorithm algorithm = Algorithm::lili;
    EnvSpec env = make_env_spec(EnvId::point_mass);
    std::uint64_t seed = 0;
    std::size_t interactions = 30000;
    std::size_t log_every = 1;
    std::size_t checkpoint_every = 0;  // 0: final checkpoint only

    // Initial ground strategy: angle (point_mass), lane (driving) or mode index (hockey).
    double initial_strategy = std::numbers::pi;

    SacConfig sac;
    LatentConfig latent;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    double lr_alpha = 3e-4;
    double lr_encoder = 3e-4;
    double lr_decoder = 3e-4;

    std::size_t updates_per_interaction = 64;
    std::size_t batch_pairs = 32;
    std::size_t transitions_per_pair = 8;
    std::size_t buffer_capacity = 4000;
    std::size_t warmup = 20;
    bool critic_to_encoder = true;  // J_Q gradient reaches the encoder alongside the representation loss

    [[nodiscard]] std::size_t batch_size() const { return batch_pairs * transitions_per_pair; }

    [[nodiscard]] GroundStrategy initial_ground() const {
        switch (env.id) {
            case EnvId::point_mass: return TargetAngle{wrap_angle(initial_strategy)};
            case EnvId::driving: return MergeLane{static_cast<int>(initial_strategy)};
            case EnvId::hockey: return static_cast<StrikeMode>(static_cast<int>(initial_strategy));
        }
        return TargetAngle{};
    }

    void validate() const {
        env.validate();
        if ((algorithm == Algorithm::oracle) != env.oracle)
            throw ConfigError("env.oracle: must be true exactly when run.algorithm = oracle");
        if (log_every < 1) throw ConfigError("run.log_every must be >= 1");
        if (sac.hidden < 1) throw ConfigError("sac.hidden must be >= 1");
        if (!(sac.gamma >= 0.0 && sac.gamma < 1.0)) throw ConfigError("sac.gamma must lie in [0, 1)");
        if (!(sac.polyak > 0.0 && sac.polyak <= 1.0)) throw ConfigError("sac.polyak must lie in (0, 1]");
        if (!(sac.initial_alpha > 0.0)) throw ConfigError("sac.initial_alpha must be > 0");
        if (latent.latent_dim < 1) throw ConfigError("latent.dim must be >= 1");
        if (latent.hidden < 1) throw ConfigError("latent.hidden must be >= 1");
        if (latent.tuple_budget < 1) throw ConfigError("latent.tuple_budget must be >= 1");
        for (auto [name, v] : {std::pair{"train.lr_actor", lr_actor}, {"train.lr_critic", lr_critic},
                               {"train.lr_alpha", lr_alpha}, {"train.lr_encoder", lr_encoder},
                               {"train.lr_decoder", lr_decoder}})
            if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be > 0");
        if (batch_pairs < 1) throw ConfigError("train.batch_pairs must be >= 1");
        if (transitions_per_pair < 1) throw ConfigError("train.transitions_per_pair must be >= 1");
        if (buffer_capacity < static_cast<std::size_t>(env.history) + 1)
            throw ConfigError("train.buffer_capacity must exceed env.history");
        switch (env.id) {
            case EnvId::point_mass: break;
            case EnvId::driving:
                if (initial_strategy != 0.0 && initial_strategy != 1.0)
                    throw ConfigError("run.initial_strategy: driving lane must be 0 or 1");
                break;
            case EnvId::hockey:
                if (initial_strategy != 0.0 && initial_strategy != 1.0 && initial_strategy != 2.0)
                    throw ConfigError("run.initial_strategy: hockey mode must be 0, 1 or 2");
                break;
        }
    }

    bool operator==(const RunConfig&) const = default;
};

/// Sensible starting strategy per environment: far side of the circle, lane 0, middle.
inline double default_initial_strategy(EnvId id) {
    switch (id) {
        case EnvId::point_mass: return std::numbers::pi;
        case EnvId::driving: return 0.0;
        case EnvId::hockey: return 1.0;
    }
    return 0.0;
}

inline RunConfig make_run_config(EnvId env, Algorithm algo) {
    RunConfig c;
    c.algorithm = algo;
    c.env = make_env_spec(env);
    c.env.oracle = algo == Algorithm::oracle;
    c.initial_strategy = default_initial_strategy(env);
    return c;
}

/// Reduced network widths and update counts that keep one run within a
/// single-core budget. Everything else stays at the defaults.
inline RunConfig desk_scale(RunConfig c) {
    c.sac.hidden = 64;
    c.latent.hidden = 64;
    c.updates_per_interaction = 8;
    c.batch_pairs = 8;
    c.transitions_per_pair = 8;
    c.lr_actor = c.lr_critic = c.lr_alpha = c.lr_encoder = c.lr_decoder = 1e-3;
    return c;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    auto r = std::from_chars(text.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": cannot parse '" + text + "' as a number");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

// Flat view of every config field, in a fixed order, as key -> text.
struct Field {
    std::string key;
    std::string (*get)(const RunConfig&);
    void (*set)(RunConfig&, const std::string& key, const std::string& text);
};

#define LILI_NUM_FIELD(KEY, MEMBER, TYPE)                                                          \
    Field {                                                                                        \
        KEY, [](const RunConfig& c) {                                                              \
            if constexpr (std::is_floating_point_v<TYPE>) return format_double(c.MEMBER);          \
            else return std::to_string(c.MEMBER);                                                  \
        },                                                                                         \
            [](RunConfig& c, const std::string& k, const std::string& t) { c.MEMBER = parse_number<TYPE>(k, t); } \
    }

inline const std::vector<Field>& config_fields() {
    static const std::vector<Field> fields = {
        Field{"run.algorithm", [](const RunConfig& c) { return to_string(c.algorithm); },
              [](RunConfig& c, const std::string&, const std::string& t) { c.algorithm = parse_algorithm(t); }},
        LILI_NUM_FIELD("run.seed", seed, std::uint64_t),
        LILI_NUM_FIELD("run.interactions", interactions, std::size_t),
        LILI_NUM_FIELD("run.log_every", log_every, std::size_t),
        LILI_NUM_FIELD("run.checkpoint_every", checkpoint_every, std::size_t),
        LILI_NUM_FIELD("run.initial_strategy", initial_strategy, double),
        Field{"env.id", [](const RunConfig& c) { return to_string(c.env.id); },
              [](RunConfig& c, const std::string&, const std::string& t) { c.env.id = parse_env_id(t); }},
        LILI_NUM_FIELD("env.horizon", env.horizon, int),
        Field{"env.oracle", [](const RunConfig& c) { return std::string(c.env.oracle ? "true" : "false"); },
              [](RunConfig& c, const std::string& k, const std::string& t) { c.env.oracle = parse_bool(k, t); }},
        LILI_NUM_FIELD("env.noise", env.noise_sigma, double),
        LILI_NUM_FIELD("env.history", env.history, int),
        LILI_NUM_FIELD("env.circle_radius", env.circle_radius, double),
        LILI_NUM_FIELD("env.start_x", env.start_x, double),
        LILI_NUM_FIELD("env.start_y", env.start_y, double),
        LILI_NUM_FIELD("env.max_speed", env.max_speed, double),
        LILI_NUM_FIELD("env.angle_step", env.angle_step, double),
        LILI_NUM_FIELD("env.arena_radius", env.arena_radius, double),
        LILI_NUM_FIELD("env.lane_offset", env.lane_offset, double),
        LILI_NUM_FIELD("env.lateral_speed", env.lateral_speed, double),
        LILI_NUM_FIELD("env.car_width", env.car_width, double),
        LILI_NUM_FIELD("env.car_length", env.car_length, double),
        LILI_NUM_FIELD("env.start_gap", env.start_gap, double),
        LILI_NUM_FIELD("env.closing_speed", env.closing_speed, double),
        LILI_NUM_FIELD("env.merge_step", env.merge_step, int),
        LILI_NUM_FIELD("env.board_half_width", env.board_half_width, double),
        LILI_NUM_FIELD("env.paddle_speed", env.paddle_speed, double),
        LILI_NUM_FIELD("env.aim_offset", env.aim_offset, double),
        LILI_NUM_FIELD("env.block_threshold", env.block_threshold, double),
        LILI_NUM_FIELD("env.distance_cost", env.distance_cost, double),
        LILI_NUM_FIELD("sac.hidden", sac.hidden, std::size_t),
        LILI_NUM_FIELD("sac.gamma", sac.gamma, double),
        LILI_NUM_FIELD("sac.polyak", sac.polyak, double),
        LILI_NUM_FIELD("sac.initial_alpha", sac.initial_alpha, double),
        LILI_NUM_FIELD("latent.dim", latent.latent_dim, std::size_t),
        LILI_NUM_FIELD("latent.hidden", latent.hidden, std::size_t),
        LILI_NUM_FIELD("latent.tuple_budget", latent.tuple_budget, std::size_t),
        LILI_NUM_FIELD("train.lr_actor", lr_actor, double),
        LILI_NUM_FIELD("train.lr_critic", lr_critic, double),
        LILI_NUM_FIELD("train.lr_alpha", lr_alpha, double),
        LILI_NUM_FIELD("train.lr_encoder", lr_encoder, double),
        LILI_NUM_FIELD("train.lr_decoder", lr_decoder, double),
        LILI_NUM_FIELD("train.updates_per_interaction", updates_per_interaction, std::size_t),
        LILI_NUM_FIELD("train.batch_pairs", batch_pairs, std::size_t),
        LILI_NUM_FIELD("train.transitions_per_pair", transitions_per_pair, std::size_t),
        LILI_NUM_FIELD("train.buffer_capacity", buffer_capacity, std::size_t),
        LILI_NUM_FIELD("train.warmup", warmup, std::size_t),
        Field{"train.critic_to_encoder", [](const RunConfig& c) { return std::string(c.critic_to_encoder ? "true" : "false"); },
              [](RunConfig& c, const std::string& k, const std::string& t) { c.critic_to_encoder = parse_bool(k, t); }},
    };
    return fields;
}

#undef LILI_NUM_FIELD

}  // namespace detail

/// Sets one dotted key ("section.name") from text. Throws ConfigError naming the key.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& text) {
    for (const auto& f : detail::config_fields())
        if (f.key == key) {
            f.set(c, key, text);
            return;
        }
    throw ConfigError(key + ": unknown configuration key");
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
    for (const auto& f : detail::config_fields())
        if (f.key == key) return f.get(c);
    throw ConfigError(key + ": unknown configuration key");
}

inline std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : detail::config_fields()) out.push_back(f.key);
    return out;
}

/// INI text with one [section] per key prefix, every field written.
inline std::string serialize_config(const RunConfig& c) {
    boost::property_tree::ptree tree;
    for (const auto& f : detail::config_fields()) tree.put(f.key, f.get(c));
    std::ostringstream os;
    boost::property_tree::write_ini(os, tree);
    return os.str();
}

/// Parses INI text on top of `base`. Unknown sections or keys are errors.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(section + ": key outside of any section");
        for (const auto& [name, value] : body) set_config_value(base, section + "." + name, value.data());
    }
    return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

}  // namespace lili
