#pragma once

// The training loop: collect an interaction with the z-conditioned policy,
// store it, run update rounds over sampled consecutive-interaction pairs,
// then predict the next z from the interaction just played.

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lili/autodiff/adam.hpp"
#include "lili/autodiff/checkpoint.hpp"
#include "lili/env/environment.hpp"
#include "lili/env/strategy.hpp"
#include "lili/latent/model.hpp"
#include "lili/sac/sac.hpp"
#include "lili/trainer/buffer.hpp"
#include "lili/trainer/config.hpp"
#include "lili/trainer/io.hpp"

namespace lili {

/// A loss went non-finite; training stops.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RolloutPolicy { random, stochastic, deterministic };

/// Plays one interaction from a freshly reset `env`.
/// `z` is the policy's latent input; it must be empty for agents without one.
template <class Rng>
Interaction rollout(const SacAgent& agent, Environment& env, std::span<const double> z, RolloutPolicy policy, Rng& rng) {
    if (env.t() != 0 || env.done()) throw UsageError("rollout needs a freshly reset environment");
    const auto& spec = env.spec();
    Interaction it;
    it.obs_dim = spec.obs_dim();
    it.act_dim = spec.action_dim();
    it.ground = env.ground();
    it.latent.assign(z.begin(), z.end());
    std::vector<double> obs = env.observe();
    it.states = obs;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    while (!env.done()) {
        std::vector<double> a;
        if (policy == RolloutPolicy::random) {
            a.resize(it.act_dim);
            for (auto& v : a) v = unif(rng);
        } else {
            a = select_action(agent, obs, z,
                              policy == RolloutPolicy::deterministic ? ActionMode::deterministic : ActionMode::stochastic,
                              rng);
        }
        auto res = env.step(a);
        it.actions.insert(it.actions.end(), a.begin(), a.end());
        it.rewards.push_back(res.reward);
        it.states.insert(it.states.end(), res.obs.begin(), res.obs.end());
        obs = std::move(res.obs);
    }
    it.terminated_early = env.terminated_early();
    it.summary = env.summary();
    return it;
}

struct UpdateStats {
    double rep_loss = kNoValue;
    double critic_loss = kNoValue;
    double actor_loss = kNoValue;
};

/// Transitions sampled for one gradient step, grouped by interaction pair.
struct PairBatch {
    TransitionBatch batch;
    std::vector<std::size_t> pair_of_row;  // row -> pair slot
    std::vector<std::size_t> next_index;   // pair slot -> index of the interaction whose transitions are used
    std::vector<double> true_next;         // in-interaction s' per row (decoder target)
};

class Trainer {
public:
    explicit Trainer(RunConfig cfg)
        : cfg_(std::move(cfg)), rng_(cfg_.seed), env_((cfg_.validate(), cfg_.env)), buffer_(cfg_.buffer_capacity) {
        const auto obs = cfg_.env.obs_dim(), act = cfg_.env.action_dim();
        const std::size_t cond = uses_latent(cfg_.algorithm) ? cfg_.latent.latent_dim : 0;
        agent_ = make_sac_agent(obs, act, cond, cfg_.sac, rng_);
        if (uses_latent(cfg_.algorithm)) latent_ = make_latent_model(obs, act, cfg_.latent, rng_);
        init_optimizers();
        z_.assign(cond, 0.0);
        ground_ = cfg_.initial_ground();
    }

    [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const SacAgent& agent() const noexcept { return agent_; }
    [[nodiscard]] const std::optional<LatentModel>& latent() const noexcept { return latent_; }
    [[nodiscard]] const InteractionBuffer& buffer() const noexcept { return buffer_; }
    [[nodiscard]] std::span<const double> current_z() const noexcept { return z_; }
    [[nodiscard]] const GroundStrategy& ground() const noexcept { return ground_; }
    [[nodiscard]] std::size_t interactions_done() const noexcept { return done_; }

    /// Called with (k - 1, k) for every pair used in an update.
    std::function<void(std::size_t, std::size_t)> on_pair;

    /// Collect, store, update, re-encode. Returns the metrics for this interaction.
    MetricsRow step() {
        const std::size_t i = done_;
        env_.reset(ground_);
        const auto policy = i < cfg_.warmup ? RolloutPolicy::random : RolloutPolicy::stochastic;
        Interaction it = rollout(agent_, env_, z_, policy, rng_);
        it.index = i;

        history_.push_back(it.summary);
        while (history_.size() > static_cast<std::size_t>(cfg_.env.history)) history_.pop_front();
        const std::vector<EpisodeSummary> hist(history_.begin(), history_.end());
        const GroundStrategy next_ground = advance_strategy(cfg_.env, ground_, hist, rng_);
        it.next_initial_obs = Environment(cfg_.env).reset(next_ground);

        if (latent_)
            for (std::size_t t = 0; t < it.length(); ++t) {
                std::vector<double> target(it.state(t + 1).begin(), it.state(t + 1).end());
                target.push_back(it.rewards[t]);
                latent_->targets.update(target);
            }

        MetricsRow row;
        row.interaction = i;
        row.episode_return = it.episode_return();
        row.mean_step_reward = row.episode_return / static_cast<double>(it.length());
        row.success = it.summary.success ? 1.0 : 0.0;
        row.z_norm = norm(z_);
        row.ground_strategy = strategy_scalar(it.ground);

        buffer_.push(std::move(it));

        if (i >= cfg_.warmup && buffer_.pair_count(cfg_.env.history) > 0) {
            UpdateStats sum{0.0, 0.0, 0.0};
            const std::size_t n = cfg_.updates_per_interaction;
            for (std::size_t u = 0; u < n; ++u) {
                const auto s = update();
                sum.rep_loss += s.rep_loss;
                sum.critic_loss += s.critic_loss;
                sum.actor_loss += s.actor_loss;
            }
            if (n > 0) {
                row.rep_loss = latent_ ? sum.rep_loss / n : kNoValue;
                row.critic_loss = sum.critic_loss / n;
                row.actor_loss = sum.actor_loss / n;
            }
        }
        row.alpha = agent_.alpha();

        if (latent_) {
            const std::size_t w = std::min<std::size_t>(cfg_.env.history, buffer_.size());
            const auto window = buffer_.window(i + 1, w);
            z_ = encode(*latent_, all_tuples(window));
        }
        ground_ = next_ground;
        ++done_;
        return row;
    }

    /// One gradient step on every network.
    UpdateStats update() {
        const auto pb = sample_batch();
        const auto& batch = pb.batch;
        const std::size_t B = batch.size;
        const bool cross = bootstraps_across(cfg_.algorithm);
        UpdateStats st;

        std::vector<double> z_rows;
        {
            ad::Tape tape;
            std::optional<ad::Var> z;
            ad::Var rep = tape.scalar(0.0);
            std::vector<double> z_next_rows;
            if (latent_) {
                const std::size_t P = pb.next_index.size();
                const std::size_t N = static_cast<std::size_t>(cfg_.env.history);
                TupleSet cur, nxt;
                std::vector<std::size_t> off_cur{0}, off_nxt{0};
                for (std::size_t p = 0; p < P; ++p) {
                    const std::size_t k = pb.next_index[p];
                    auto tc = gather_tuples(buffer_.window(k, N), cfg_.latent.tuple_budget, rng_);
                    auto tn = gather_tuples(buffer_.window(k + 1, N), cfg_.latent.tuple_budget, rng_);
                    cur.rows.insert(cur.rows.end(), tc.rows.begin(), tc.rows.end());
                    nxt.rows.insert(nxt.rows.end(), tn.rows.begin(), tn.rows.end());
                    cur.count += tc.count;
                    nxt.count += tn.count;
                    off_cur.push_back(cur.count);
                    off_nxt.push_back(nxt.count);
                }
                ad::Var xc = tape.constant(cur.count, latent_->tuple_width(), std::move(cur.rows));
                ad::Var zp = encode_on_tape(*latent_, xc, off_cur, Binding::trainable);
                z = ad::gather_rows(zp, pb.pair_of_row);
                z_rows.assign(z->value().begin(), z->value().end());
                if (cross) {
                    ad::Tape side;
                    ad::Var xn = side.constant(nxt.count, latent_->tuple_width(), std::move(nxt.rows));
                    ad::Var zn = ad::gather_rows(encode_on_tape(std::as_const(*latent_), xn, off_nxt), pb.pair_of_row);
                    z_next_rows.assign(zn.value().begin(), zn.value().end());
                }
                ad::Var s = tape.constant(B, agent_.obs_dim, batch.s);
                ad::Var a = tape.constant(B, agent_.act_dim, batch.a);
                auto pred = decode_on_tape(*latent_, s, a, *z, Binding::trainable);
                ad::Var tgt = tape.constant(B, agent_.obs_dim + 1, normalized_targets(*latent_, pb.true_next, batch.r));
                rep = reconstruction_loss(pred, tgt);
            }
            const auto targets = critic_targets(agent_, batch, z_rows, z_next_rows, cfg_.sac.gamma, cross, rng_);
            std::optional<ad::Var> zq = z;
            if (z && !cfg_.critic_to_encoder) zq = ad::detach(*z);
            ad::Var jq = critic_loss_on_tape(agent_, tape, batch, zq, targets);
            ad::Var total = latent_ ? ad::add(jq, rep) : jq;
            tape.backward(total);
            st.critic_loss = jq.item();
            if (latent_) st.rep_loss = rep.item();
            guard("critic_loss", st.critic_loss);
            guard("rep_loss", latent_ ? st.rep_loss : 0.0);
            adam_step(agent_.critic_tensors(), critic_opt_);
            if (latent_) {
                adam_step(latent_->encoder.tensors(), encoder_opt_);
                adam_step(latent_->decoder.tensors(), decoder_opt_);
            }
        }

        const auto act = actor_loss(agent_, batch, z_rows, rng_);
        st.actor_loss = act.loss;
        guard("actor_loss", st.actor_loss);
        adam_step(agent_.actor.tensors(), actor_opt_);
        const double tl = temperature_loss(agent_, act.log_prob);
        guard("temperature_loss", tl);
        adam_step({&agent_.log_alpha}, alpha_opt_);
        soft_update(agent_, cfg_.sac.polyak);
        return st;
    }

    /// Parameters, optimizer moments and normalizer state.
    [[nodiscard]] Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.put("meta/dims", Tensor(Shape{3}, std::vector<double>{static_cast<double>(agent_.obs_dim),
                                                                   static_cast<double>(agent_.act_dim),
                                                                   static_cast<double>(agent_.cond_dim)}));
        ck.put("meta/interactions", Tensor(Shape{1}, std::vector<double>{static_cast<double>(done_)}));
        save_agent(ck, agent_);
        ck.put_adam("actor", actor_opt_);
        ck.put_adam("critic", critic_opt_);
        ck.put_adam("alpha", alpha_opt_);
        if (latent_) {
            save_latent(ck, *latent_);
            ck.put_adam("encoder", encoder_opt_);
            ck.put_adam("decoder", decoder_opt_);
        }
        return ck;
    }

private:
    static double norm(std::span<const double> v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }

    void guard(const char* what, double v) const {
        if (!std::isfinite(v))
            throw DivergenceError(std::string(what) + " became non-finite at interaction " + std::to_string(done_));
    }

    void init_optimizers() {
        actor_opt_ = AdamState({cfg_.lr_actor}, agent_.actor.tensors());
        critic_opt_ = AdamState({cfg_.lr_critic}, agent_.critic_tensors());
        alpha_opt_ = AdamState({cfg_.lr_alpha}, {&agent_.log_alpha});
        if (latent_) {
            encoder_opt_ = AdamState({cfg_.lr_encoder}, latent_->encoder.tensors());
            decoder_opt_ = AdamState({cfg_.lr_decoder}, latent_->decoder.tensors());
        }
    }

    PairBatch sample_batch() {
        const std::size_t N = static_cast<std::size_t>(cfg_.env.history);
        const bool cross = bootstraps_across(cfg_.algorithm);
        const std::size_t P = cfg_.batch_pairs, T = cfg_.transitions_per_pair, B = P * T;
        const std::size_t O = agent_.obs_dim, A = agent_.act_dim;
        PairBatch pb;
        auto& b = pb.batch;
        b.size = B;
        b.s.reserve(B * O);
        b.a.reserve(B * A);
        b.s_next.reserve(B * O);
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t k = buffer_.sample_pair(N, rng_);
            if (on_pair) on_pair(k - 1, k);
            pb.next_index.push_back(k);
            const Interaction& it = buffer_.at(k);
            std::uniform_int_distribution<std::size_t> pick(0, it.length() - 1);
            for (std::size_t j = 0; j < T; ++j) {
                const std::size_t t = pick(rng_);
                const bool last = t + 1 == it.length();
                const auto s = it.state(t), a = it.action(t), s2 = it.state(t + 1);
                b.s.insert(b.s.end(), s.begin(), s.end());
                b.a.insert(b.a.end(), a.begin(), a.end());
                b.r.push_back(it.rewards[t]);
                pb.true_next.insert(pb.true_next.end(), s2.begin(), s2.end());
                if (last && cross) b.s_next.insert(b.s_next.end(), it.next_initial_obs.begin(), it.next_initial_obs.end());
                else b.s_next.insert(b.s_next.end(), s2.begin(), s2.end());
                b.done.push_back(last ? 1.0 : 0.0);
                b.boundary.push_back(last ? 1.0 : 0.0);
                pb.pair_of_row.push_back(p);
            }
        }
        return pb;
    }

    RunConfig cfg_;
    std::mt19937_64 rng_;
    Environment env_;
    InteractionBuffer buffer_;
    SacAgent agent_;
    std::optional<LatentModel> latent_;
    AdamState actor_opt_, critic_opt_, alpha_opt_, encoder_opt_, decoder_opt_;
    std::vector<double> z_;
    GroundStrategy ground_;
    std::deque<EpisodeSummary> history_;
    std::size_t done_ = 0;
};

struct TrainResult {
    std::size_t interactions = 0;
    std::filesystem::path metrics;
    std::filesystem::path checkpoint;
};

/// Runs `cfg` to completion, writing metrics.csv and checkpoint.bin under `out_dir`.
/// On divergence the partial metrics and the last good checkpoint are kept and DivergenceError is rethrown.
inline TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir,
                         const std::function<void(const MetricsRow&)>& progress = {}) {
    std::filesystem::create_directories(out_dir);
    TrainResult res;
    res.metrics = out_dir / "metrics.csv";
    res.checkpoint = out_dir / "checkpoint.bin";
    Trainer tr(cfg);
    std::ofstream log(res.metrics, std::ios::trunc);
    if (!log) throw ConfigError("cannot write " + res.metrics.string());
    log << metrics_header() << '\n';
    for (std::size_t i = 0; i < cfg.interactions; ++i) {
        MetricsRow row = tr.step();
        if ((i + 1) % cfg.log_every == 0) log << format_metrics_row(row) << '\n';
        if (progress) progress(row);
        if (cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0) {
            log.flush();
            write_checkpoint(res.checkpoint, tr.checkpoint());
        }
    }
    log.flush();
    write_checkpoint(res.checkpoint, tr.checkpoint());
    res.interactions = tr.interactions_done();
    return res;
}

struct EvalReport {
    std::size_t episodes = 0;
    double mean_return = 0.0;
    double mean_step_reward = 0.0;
    double success_rate = 0.0;
    std::vector<std::string> occupancy_labels;
    std::vector<double> occupancy;          // fraction of episodes per strategy bin
    std::vector<double> strategy_samples;   // ground strategy of each episode, in order
};

/// Number of angular bins used for Point Mass occupancy.
inline constexpr std::size_t kAngleBins = 36;

inline std::vector<std::string> occupancy_labels(EnvId id) {
    switch (id) {
        case EnvId::point_mass: {
            std::vector<std::string> out;
            for (std::size_t b = 0; b < kAngleBins; ++b) out.push_back("bin" + std::to_string(b));
            return out;
        }
        case EnvId::driving: return {"lane0", "lane1"};
        case EnvId::hockey: return {"left", "middle", "right"};
    }
    return {};
}

inline std::size_t occupancy_bin(EnvId id, double strategy) {
    if (id == EnvId::point_mass) {
        const auto b = static_cast<std::size_t>(wrap_angle(strategy) / (2.0 * std::numbers::pi) * kAngleBins);
        return std::min(b, kAngleBins - 1);
    }
    return static_cast<std::size_t>(strategy);
}

/// Rebuilds the agent (and encoder) of `cfg` from `ck`.
inline SacAgent agent_from_checkpoint(const Checkpoint& ck, const RunConfig& cfg) {
    std::mt19937_64 scratch(0);
    const std::size_t cond = uses_latent(cfg.algorithm) ? cfg.latent.latent_dim : 0;
    SacAgent a = make_sac_agent(cfg.env.obs_dim(), cfg.env.action_dim(), cond, cfg.sac, scratch);
    if (ck.contains("meta/dims")) {
        const auto& d = ck.get("meta/dims");
        if (d[0] != static_cast<double>(a.obs_dim) || d[1] != static_cast<double>(a.act_dim) ||
            d[2] != static_cast<double>(a.cond_dim))
            throw ConfigError("checkpoint dimensions (obs " + std::to_string(static_cast<int>(d[0])) + ", act " +
                              std::to_string(static_cast<int>(d[1])) + ", latent " +
                              std::to_string(static_cast<int>(d[2])) + ") do not match the configuration");
    }
    load_agent(ck, a);
    return a;
}

inline std::optional<LatentModel> latent_from_checkpoint(const Checkpoint& ck, const RunConfig& cfg) {
    if (!uses_latent(cfg.algorithm)) return std::nullopt;
    std::mt19937_64 scratch(0);
    LatentModel m = make_latent_model(cfg.env.obs_dim(), cfg.env.action_dim(), cfg.latent, scratch);
    load_latent(ck, m);
    return m;
}

/// Plays `episodes` interactions with the deterministic policy while the
/// strategy machine evolves as in training, starting from the initial strategy.
inline EvalReport evaluate(const Checkpoint& ck, const RunConfig& cfg, std::size_t episodes,
                           const std::function<void(const Interaction&)>& on_interaction = {}) {
    cfg.validate();
    const SacAgent agent = agent_from_checkpoint(ck, cfg);
    const auto latent = latent_from_checkpoint(ck, cfg);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Environment env(cfg.env);
    EvalReport rep;
    rep.episodes = episodes;
    rep.occupancy_labels = occupancy_labels(cfg.env.id);
    rep.occupancy.assign(rep.occupancy_labels.size(), 0.0);
    GroundStrategy ground = cfg.initial_ground();
    std::vector<double> z(agent.cond_dim, 0.0);
    std::deque<Interaction> recent;
    std::deque<EpisodeSummary> history;
    double steps = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        env.reset(ground);
        Interaction it = rollout(agent, env, z, RolloutPolicy::deterministic, rng);
        it.index = e;
        rep.mean_return += it.episode_return();
        steps += static_cast<double>(it.length());
        rep.success_rate += it.summary.success ? 1.0 : 0.0;
        const double g = strategy_scalar(it.ground);
        rep.strategy_samples.push_back(g);
        rep.occupancy[occupancy_bin(cfg.env.id, g)] += 1.0;
        history.push_back(it.summary);
        while (history.size() > static_cast<std::size_t>(cfg.env.history)) history.pop_front();
        const std::vector<EpisodeSummary> hist(history.begin(), history.end());
        ground = advance_strategy(cfg.env, ground, hist, rng);
        if (on_interaction) on_interaction(it);
        recent.push_back(std::move(it));
        while (recent.size() > static_cast<std::size_t>(cfg.env.history)) recent.pop_front();
        if (latent) {
            std::vector<const Interaction*> window;
            for (const auto& r : recent) window.push_back(&r);
            z = encode(*latent, all_tuples(window));
        }
    }
    if (episodes > 0) {
        const double n = static_cast<double>(episodes);
        rep.mean_step_reward = rep.mean_return / steps;
        rep.mean_return /= n;
        rep.success_rate /= n;
        for (auto& o : rep.occupancy) o /= n;
    }
    return rep;
}

}  // namespace lili
