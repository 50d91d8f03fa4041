#pragma once

// One live arena session: a human plays the opponent against a frozen ego
// checkpoint. Transport independent; messages go out through a queue.
//
// Phases per interaction:
//   decide  the human picks the opponent strategy (hockey aim, driving lane);
//           with no choice the previous one is held
//   flight  the environment advances one tick at a time; hockey accepts nudges
//
// With tick_ms > 0 the caller drives on_tick() from a timer; the decide window
// lasts decision_ticks ticks. With tick_ms = 0 (lockstep) every human_action
// is one tick: in decide it closes the window, in flight it advances one step.

#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lili/cli/run.hpp"
#include "lili/trainer/io.hpp"
#include "lili/trainer/trainer.hpp"

namespace lili::arena {

using json = nlohmann::json;

inline constexpr int kProtoVersion = 1;
inline constexpr double kMaxNudge = 0.05;

/// Frozen checkpoint shared by every session.
struct ArenaModel {
    RunConfig config;
    SacAgent agent;
    std::optional<LatentModel> latent;
};

/// Loads `ckpt_path` with the run config found next to it (or `config_path`).
inline std::shared_ptr<const ArenaModel> load_arena_model(const std::filesystem::path& ckpt_path,
                                                          const std::filesystem::path& config_path, EnvId expected) {
    RunConfig cfg = cli::load_run_config(config_path);
    if (cfg.env.id != expected)
        throw ConfigError("checkpoint was trained on " + to_string(cfg.env.id) + ", arena requested " + to_string(expected));
    if (expected == EnvId::point_mass) throw ConfigError("arena supports hockey and driving only");
    if (cfg.algorithm == Algorithm::oracle)
        throw ConfigError("oracle policies observe the opponent strategy and cannot play in the arena");
    Checkpoint ck;
    try {
        ck = read_checkpoint(ckpt_path);
    } catch (const std::exception& e) {
        throw ConfigError("cannot load checkpoint " + ckpt_path.string() + ": " + e.what());
    }
    auto m = std::make_shared<ArenaModel>(ArenaModel{cfg, agent_from_checkpoint(ck, cfg), latent_from_checkpoint(ck, cfg)});
    return m;
}

struct ArenaOptions {
    int tick_ms = 50;
    std::size_t decision_ticks = 40;
    std::size_t practice = 0;  // first K interactions excluded from the tally
};

struct SessionRecord {
    Interaction interaction;
    bool practice = false;
};

class Session {
public:
    Session(std::string id, std::shared_ptr<const ArenaModel> model, ArenaOptions opt)
        : id_(std::move(id)), model_(std::move(model)), opt_(opt), env_(model_->config.env),
          rng_(model_->config.seed), z_(model_->agent.cond_dim, 0.0), choice_(model_->config.initial_ground()) {
        occupancy_.assign(occupancy_labels(env_.spec().id).size(), 0.0);
        emit("hello", {{"spec", spec_json()},
                       {"tick_ms", opt_.tick_ms},
                       {"proto_version", kProtoVersion},
                       {"decision_ticks", opt_.decision_ticks},
                       {"practice", opt_.practice},
                       {"controls", controls()}});
        begin_interaction();
    }

    [[nodiscard]] const std::string& id() const noexcept { return id_; }
    [[nodiscard]] bool lockstep() const noexcept { return opt_.tick_ms == 0; }
    [[nodiscard]] bool deciding() const noexcept { return deciding_; }
    [[nodiscard]] const std::vector<double>& z() const noexcept { return z_; }
    [[nodiscard]] const std::vector<SessionRecord>& log() const noexcept { return log_; }
    [[nodiscard]] std::size_t blocks() const noexcept { return blocks_; }
    [[nodiscard]] std::size_t total() const noexcept { return total_; }

    /// Messages produced since the last call, one JSON document per entry.
    std::vector<json> drain() {
        std::vector<json> out(outbox_.begin(), outbox_.end());
        outbox_.clear();
        return out;
    }

    /// Handles one raw line from the client.
    void on_line(const std::string& line) {
        json msg;
        try {
            msg = json::parse(line);
        } catch (const json::exception&) {
            return error("malformed JSON", json());
        }
        if (!msg.is_object() || msg.value("kind", "") != "human_action")
            return error("expected a human_action message", msg.contains("seq") ? msg["seq"] : json());
        const json payload = msg.contains("payload") ? msg["payload"] : json::object();
        on_action(payload, msg.contains("seq") ? msg["seq"] : json());
    }

    /// Timed mode tick.
    void on_tick() {
        if (deciding_) {
            if (window_left_ > 0) --window_left_;
            if (window_left_ == 0) start_flight();
            else emit_state();
        } else {
            advance();
        }
    }

private:
    json spec_json() const {
        json j = json::object();
        const json all = cli::config_json(model_->config);
        for (const auto& [k, v] : all.items())
            if (k.rfind("env.", 0) == 0) j[k.substr(4)] = v;
        return j;
    }

    json controls() const {
        if (env_.spec().id == EnvId::hockey)
            return {{"decide", {{"aim", {"left", "middle", "right"}}}}, {"flight", {{"nudge", kMaxNudge}}}};
        return {{"decide", {{"lane", {0, 1}}}}, {"flight", json::object()}};
    }

    void emit(const std::string& kind, json body) {
        body["kind"] = kind;
        body["session"] = id_;
        body["seq"] = seq_++;
        outbox_.push_back(std::move(body));
    }

    void error(const std::string& what, const json& in_reply_to) {
        emit("error", {{"message", what}, {"in_reply_to", in_reply_to}});
    }

    json score_json() const {
        json occ = json::object();
        const auto labels = occupancy_labels(env_.spec().id);
        for (std::size_t b = 0; b < labels.size(); ++b)
            occ[labels[b]] = total_ ? occupancy_[b] / static_cast<double>(total_) : 0.0;
        return {{"blocks", blocks_}, {"total", total_}, {"occupancy", occ}};
    }

    void emit_state() {
        json body{{"t", env_.t()},
                  {"interaction", index_},
                  {"phase", deciding_ ? "decide" : "flight"},
                  {"practice", index_ < opt_.practice},
                  {"ego", {{"x", env_.ego_x()}, {"y", env_.ego_y()}}},
                  {"score", score_json()}};
        if (deciding_) body["window_ticks_left"] = window_left_;
        else body["done"] = env_.done();
        if (env_.spec().id == EnvId::hockey)
            body["puck_or_cars"] = {{"x", env_.puck_x()}, {"y", deciding_ ? 1.0 : env_.puck_y()}};
        else
            body["puck_or_cars"] = {{"x", env_.other_x()}, {"y", env_.other_y()}};
        emit("state", std::move(body));
    }

    void begin_interaction() {
        deciding_ = true;
        window_left_ = opt_.decision_ticks;
        pending_nudge_ = 0.0;
        emit_state();
    }

    void start_flight() {
        deciding_ = false;
        obs_ = env_.reset(choice_);
        cur_ = Interaction{};
        cur_.index = index_;
        cur_.obs_dim = env_.spec().obs_dim();
        cur_.act_dim = env_.spec().action_dim();
        cur_.ground = choice_;
        cur_.latent = z_;
        cur_.states = obs_;
        emit_state();
    }

    void advance() {
        if (pending_nudge_ != 0.0) {
            env_.nudge_aim(pending_nudge_);
            pending_nudge_ = 0.0;
        }
        const auto a = select_action(model_->agent, obs_, z_, ActionMode::deterministic, rng_);
        auto res = env_.step(a);
        cur_.actions.insert(cur_.actions.end(), a.begin(), a.end());
        cur_.rewards.push_back(res.reward);
        cur_.states.insert(cur_.states.end(), res.obs.begin(), res.obs.end());
        obs_ = std::move(res.obs);
        emit_state();
        if (env_.done()) finish_interaction();
    }

    void finish_interaction() {
        cur_.terminated_early = env_.terminated_early();
        cur_.summary = env_.summary();
        const bool practice = index_ < opt_.practice;
        const double g = strategy_scalar(cur_.ground);
        if (!practice) {
            ++total_;
            blocks_ += cur_.summary.success ? 1 : 0;
            occupancy_[occupancy_bin(env_.spec().id, g)] += 1.0;
        }
        recent_.push_back(cur_);
        while (recent_.size() > static_cast<std::size_t>(model_->config.env.history)) recent_.pop_front();
        const std::vector<double> before = z_;
        if (model_->latent) {
            std::vector<const Interaction*> window;
            for (const auto& r : recent_) window.push_back(&r);
            z_ = encode(*model_->latent, all_tuples(window));
        }
        double norm = 0.0, delta = 0.0;
        for (std::size_t k = 0; k < z_.size(); ++k) {
            norm += z_[k] * z_[k];
            delta += (z_[k] - before[k]) * (z_[k] - before[k]);
        }
        json end{{"interaction", index_},
                 {"practice", practice},
                 {"mode", env_.spec().id == EnvId::hockey ? to_string(static_cast<StrikeMode>(static_cast<int>(g)))
                                                          : "lane" + std::to_string(static_cast<int>(g))},
                 {"z_norm", std::sqrt(norm)},
                 {"z_delta", std::sqrt(delta)},
                 {"return", cur_.episode_return()}};
        if (env_.spec().id == EnvId::hockey) end["blocked"] = cur_.summary.success;
        else end["collided"] = !cur_.summary.success;
        emit("interaction_end", std::move(end));
        emit("score", score_json());
        log_.push_back({std::move(cur_), practice});
        ++index_;
        begin_interaction();
    }

    void on_action(const json& payload, const json& seq) {
        if (!payload.is_object()) return error("payload must be an object", seq);
        const bool hockey = env_.spec().id == EnvId::hockey;
        if (deciding_) {
            if (payload.contains("nudge")) return error("out of turn: nudges are accepted only during flight", seq);
            try {
                if (hockey && payload.contains("aim")) choice_ = parse_strike_mode(payload.at("aim").get<std::string>());
                else if (!hockey && payload.contains("lane")) {
                    const int lane = payload.at("lane").get<int>();
                    if (lane != 0 && lane != 1) return error("lane must be 0 or 1", seq);
                    choice_ = MergeLane{lane};
                } else if (!payload.empty()) {
                    return error("unknown decide payload", seq);
                }
            } catch (const std::exception& e) {
                return error(std::string("bad decide payload: ") + e.what(), seq);
            }
            if (lockstep()) start_flight();
            return;
        }
        if (payload.contains("aim") || payload.contains("lane"))
            return error("out of turn: the strategy is fixed once the interaction starts", seq);
        if (payload.contains("nudge")) {
            if (!hockey) return error("nudges are a hockey control", seq);
            if (!payload.at("nudge").is_number()) return error("nudge must be a number", seq);
            const double dx = payload.at("nudge").get<double>();
            if (!(std::abs(dx) <= kMaxNudge)) return error("nudge magnitude exceeds the per-tick limit", seq);
            pending_nudge_ += dx;
        } else if (!payload.empty()) {
            return error("unknown flight payload", seq);
        }
        if (lockstep()) advance();
    }

    std::string id_;
    std::shared_ptr<const ArenaModel> model_;
    ArenaOptions opt_;
    Environment env_;
    std::mt19937_64 rng_;
    std::vector<double> z_;
    GroundStrategy choice_;
    std::vector<double> obs_;
    Interaction cur_;
    std::deque<Interaction> recent_;
    std::vector<SessionRecord> log_;
    std::vector<double> occupancy_;
    std::deque<json> outbox_;
    std::size_t seq_ = 0;
    std::size_t index_ = 0;
    std::size_t window_left_ = 0;
    std::size_t blocks_ = 0, total_ = 0;
    double pending_nudge_ = 0.0;
    bool deciding_ = true;
};

/// Interaction CSV (with the strategy column) for every completed interaction.
inline std::string session_csv(const Session& s, const EnvSpec& spec) {
    std::ostringstream os;
    os << interaction_csv_header(spec.obs_dim(), spec.action_dim(), true) << '\n';
    for (const auto& r : s.log()) write_interaction_rows(os, r.interaction, true);
    return os.str();
}

/// Tally recomputed from the interaction log.
inline json session_summary(const Session& s, EnvId env) {
    const auto labels = occupancy_labels(env);
    std::vector<double> occ(labels.size(), 0.0);
    std::size_t blocks = 0, total = 0, practice = 0;
    json rows = json::array();
    for (const auto& r : s.log()) {
        const double g = strategy_scalar(r.interaction.ground);
        rows.push_back({{"interaction", r.interaction.index},
                        {"practice", r.practice},
                        {"strategy", labels[occupancy_bin(env, g)]},
                        {"success", r.interaction.summary.success}});
        if (r.practice) {
            ++practice;
            continue;
        }
        ++total;
        blocks += r.interaction.summary.success ? 1 : 0;
        occ[occupancy_bin(env, g)] += 1.0;
    }
    json occupancy = json::object();
    for (std::size_t b = 0; b < labels.size(); ++b) occupancy[labels[b]] = total ? occ[b] / static_cast<double>(total) : 0.0;
    return {{"session", s.id()},
            {"env", to_string(env)},
            {"practice_interactions", practice},
            {"blocks", blocks},
            {"total", total},
            {"tally", std::to_string(blocks) + "/" + std::to_string(total)},
            {"block_rate", total ? static_cast<double>(blocks) / static_cast<double>(total) : 0.0},
            {"occupancy", occupancy},
            {"interactions", rows}};
}

}  // namespace lili::arena
