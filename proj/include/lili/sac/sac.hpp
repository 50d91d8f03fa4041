#pragma once

// Soft actor-critic conditioned on a latent strategy z.
//
// Networks take concat(s, z) (actor) or concat(s, a, z) (critics); with
// cond_dim == 0 they reduce to plain SAC on s. Whether the critic target
// bootstraps through interaction boundaries is a per-call switch.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lili/autodiff/adam.hpp"
#include "lili/autodiff/checkpoint.hpp"
#include "lili/autodiff/mlp.hpp"
#include "lili/autodiff/squashed_gaussian.hpp"
#include "lili/autodiff/tape.hpp"

namespace lili {

struct SacConfig {
    std::size_t hidden = 256;
    double gamma = 0.99;
    double polyak = 0.005;
    double initial_alpha = 0.1;
    bool operator==(const SacConfig&) const = default;
};

struct SacAgent {
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    std::size_t cond_dim = 0;  // latent width fed alongside s (0 for plain SAC)
    MlpParams actor;           // heads: mean, log_std
    std::array<MlpParams, 2> critics;
    std::array<MlpParams, 2> targets;
    Tensor log_alpha = Tensor::scalar(0.0);
    double target_entropy = 0.0;

    [[nodiscard]] double alpha() const { return std::exp(log_alpha[0]); }

    [[nodiscard]] std::vector<Tensor*> critic_tensors() {
        auto out = critics[0].tensors();
        auto more = critics[1].tensors();
        out.insert(out.end(), more.begin(), more.end());
        return out;
    }
};

template <class Rng>
SacAgent make_sac_agent(std::size_t obs_dim, std::size_t act_dim, std::size_t cond_dim, const SacConfig& cfg, Rng& rng) {
    SacAgent a;
    a.obs_dim = obs_dim;
    a.act_dim = act_dim;
    a.cond_dim = cond_dim;
    a.actor = make_mlp({obs_dim + cond_dim, cfg.hidden, cfg.hidden, 2 * act_dim}, Activation::relu,
                       {{"mean", act_dim}, {"log_std", act_dim}}, rng);
    for (auto& c : a.critics) c = make_mlp({obs_dim + act_dim + cond_dim, cfg.hidden, cfg.hidden, 1}, Activation::relu, {}, rng);
    a.targets = a.critics;
    a.log_alpha = Tensor::scalar(std::log(cfg.initial_alpha));
    a.target_entropy = -static_cast<double>(act_dim);
    return a;
}

/// A batch of transitions. At boundary rows `s_next` holds the following
/// interaction's first observation when the batch was built for
/// cross-boundary bootstrapping, otherwise the terminal observation.
struct TransitionBatch {
    std::size_t size = 0;
    std::vector<double> s;
    std::vector<double> a;
    std::vector<double> r;
    std::vector<double> s_next;
    std::vector<double> done;
    std::vector<double> boundary;
};

namespace detail {

inline ad::Var with_cond(ad::Var x, std::optional<ad::Var> z) { return z ? ad::concat_cols({x, *z}) : x; }

template <class Rng>
ad::Var standard_normal(ad::Tape& tape, std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = n(rng);
    return tape.constant(rows, cols, std::move(v));
}

}  // namespace detail

/// Policy head on the tape: returns a reparameterised sample and its log-density.
template <class Rng>
SquashedSample policy_sample(SacAgent& agent, ad::Var s, std::optional<ad::Var> z, Binding binding, Rng& rng) {
    ad::Var out = mlp_forward(agent.actor, detail::with_cond(s, z), binding);
    ad::Var mean = mlp_head(agent.actor, out, "mean");
    ad::Var log_std = mlp_head(agent.actor, out, "log_std");
    ad::Var noise = detail::standard_normal(*s.tape, s.rows(), agent.act_dim, rng);
    return squashed_gaussian_sample(mean, log_std, noise);
}

inline ad::Var q_value(const MlpParams& q, ad::Var s, ad::Var a, std::optional<ad::Var> z) {
    return mlp_forward(q, detail::with_cond(ad::concat_cols({s, a}), z));
}
inline ad::Var q_value(MlpParams& q, ad::Var s, ad::Var a, std::optional<ad::Var> z, Binding b) {
    return mlp_forward(q, detail::with_cond(ad::concat_cols({s, a}), z), b);
}

enum class ActionMode { stochastic, deterministic };

/// Action for a single observation.
template <class Rng>
std::vector<double> select_action(const SacAgent& agent, std::span<const double> s, std::span<const double> z,
                                  ActionMode mode, Rng& rng) {
    if (s.size() != agent.obs_dim || z.size() != agent.cond_dim)
        throw ConfigError("select_action: observation or latent width mismatch");
    ad::Tape tape;
    std::vector<double> in(s.begin(), s.end());
    in.insert(in.end(), z.begin(), z.end());
    const std::size_t width = in.size();
    ad::Var x = tape.constant(1, width, std::move(in));
    ad::Var out = mlp_forward(agent.actor, x);
    ad::Var mean = mlp_head(agent.actor, out, "mean");
    ad::Var act;
    if (mode == ActionMode::deterministic) {
        act = squashed_mean(mean);
    } else {
        ad::Var log_std = mlp_head(agent.actor, out, "log_std");
        ad::Var noise = detail::standard_normal(tape, 1, agent.act_dim, rng);
        act = squashed_gaussian_sample(mean, log_std, noise).action;
    }
    return {act.value().begin(), act.value().end()};
}

struct CriticTargets {
    std::vector<double> y;  // one per row
};

/// Bellman targets y = r + gamma (1 - terminal) [min Q'(s', a', z_eff) - alpha log pi(a'|s', z_eff)].
///
/// Rows flagged `boundary` bootstrap with z_next when `cross_boundary` is
/// set and are terminal otherwise. Computed without gradient flow.
template <class Rng>
CriticTargets critic_targets(const SacAgent& agent, const TransitionBatch& batch, std::span<const double> z_cur,
                             std::span<const double> z_next, double gamma, bool cross_boundary, Rng& rng) {
    const std::size_t B = batch.size, L = agent.cond_dim;
    if (L > 0 && z_cur.size() != B * L) throw ConfigError("critic_targets: z_cur has the wrong size");
    if (cross_boundary && L > 0 && z_next.size() != B * L)
        throw UsageError("critic_loss: cross-boundary bootstrapping needs z_next for every row");
    std::vector<double> z_eff;
    if (L > 0) {
        z_eff.assign(z_cur.begin(), z_cur.end());
        if (cross_boundary)
            for (std::size_t i = 0; i < B; ++i)
                if (batch.boundary[i] > 0.5) std::copy_n(z_next.begin() + i * L, L, z_eff.begin() + i * L);
    }
    ad::Tape tape;
    ad::Var s2 = tape.constant(B, agent.obs_dim, batch.s_next);
    std::optional<ad::Var> z;
    if (L > 0) z = tape.constant(B, L, z_eff);
    ad::Var out = mlp_forward(agent.actor, detail::with_cond(s2, z));
    ad::Var mean = mlp_head(agent.actor, out, "mean");
    ad::Var log_std = mlp_head(agent.actor, out, "log_std");
    auto sample = squashed_gaussian_sample(mean, log_std, detail::standard_normal(tape, B, agent.act_dim, rng));
    ad::Var q1 = q_value(agent.targets[0], s2, sample.action, z);
    ad::Var q2 = q_value(agent.targets[1], s2, sample.action, z);
    const auto qmin = ad::minimum(q1, q2).value();
    const auto logp = sample.log_prob.value();
    const double alpha = agent.alpha();
    CriticTargets t;
    t.y.resize(B);
    for (std::size_t i = 0; i < B; ++i) {
        const bool terminal = batch.done[i] > 0.5 && !(batch.boundary[i] > 0.5 && cross_boundary);
        const double soft_v = qmin[i] - alpha * logp[i];
        t.y[i] = batch.r[i] + (terminal ? 0.0 : gamma * soft_v);
    }
    return t;
}

/// J_Q = sum over both critics of mean (Q_k(s, a, z) - y)^2, recorded on `tape`.
/// `z` may carry gradient (e.g. from the encoder); y never does.
inline ad::Var critic_loss_on_tape(SacAgent& agent, ad::Tape& tape, const TransitionBatch& batch,
                                   std::optional<ad::Var> z, const CriticTargets& targets) {
    const std::size_t B = batch.size;
    ad::Var s = tape.constant(B, agent.obs_dim, batch.s);
    ad::Var a = tape.constant(B, agent.act_dim, batch.a);
    ad::Var y = tape.constant(B, 1, targets.y);
    ad::Var loss1 = ad::mean(ad::square(ad::sub(q_value(agent.critics[0], s, a, z, Binding::trainable), y)));
    ad::Var loss2 = ad::mean(ad::square(ad::sub(q_value(agent.critics[1], s, a, z, Binding::trainable), y)));
    return ad::add(loss1, loss2);
}

/// Convenience wrapper: computes targets and J_Q, backpropagates into the critics.
template <class Rng>
double critic_loss(SacAgent& agent, const TransitionBatch& batch, std::span<const double> z_cur,
                   std::span<const double> z_next, double gamma, bool cross_boundary, Rng& rng) {
    const auto targets = critic_targets(agent, batch, z_cur, z_next, gamma, cross_boundary, rng);
    ad::Tape tape;
    std::optional<ad::Var> z;
    if (agent.cond_dim > 0) z = tape.constant(batch.size, agent.cond_dim, {z_cur.begin(), z_cur.end()});
    ad::Var loss = critic_loss_on_tape(agent, tape, batch, z, targets);
    tape.backward(loss);
    return loss.item();
}

struct ActorStep {
    double loss = 0.0;
    std::vector<double> log_prob;  // per row, for the temperature update
};

/// J_pi = mean[alpha log pi(a~|s,z) - min_k Q_k(s, a~, z)]; gradients reach the actor only.
template <class Rng>
ActorStep actor_loss(SacAgent& agent, const TransitionBatch& batch, std::span<const double> z, Rng& rng) {
    const std::size_t B = batch.size;
    ad::Tape tape;
    ad::Var s = tape.constant(B, agent.obs_dim, batch.s);
    std::optional<ad::Var> zv;
    if (agent.cond_dim > 0) zv = tape.constant(B, agent.cond_dim, {z.begin(), z.end()});
    auto sample = policy_sample(agent, s, zv, Binding::trainable, rng);
    ad::Var q = ad::minimum(q_value(std::as_const(agent.critics[0]), s, sample.action, zv),
                            q_value(std::as_const(agent.critics[1]), s, sample.action, zv));
    ad::Var alpha = tape.scalar(agent.alpha());
    ad::Var loss = ad::mean(ad::sub(ad::mul(alpha, sample.log_prob), q));
    tape.backward(loss);
    ActorStep out;
    out.loss = loss.item();
    out.log_prob.assign(sample.log_prob.value().begin(), sample.log_prob.value().end());
    return out;
}

/// -log(alpha) * mean(log pi + target_entropy), gradient into log_alpha.
inline double temperature_loss(SacAgent& agent, std::span<const double> log_prob) {
    double m = 0.0;
    for (double lp : log_prob) m += lp + agent.target_entropy;
    m /= static_cast<double>(log_prob.size());
    ad::Tape tape;
    ad::Var la = tape.param(agent.log_alpha);
    ad::Var loss = ad::scale(la, -m);
    tape.backward(loss);
    return loss.item();
}

/// target <- (1 - tau) target + tau online.
inline void soft_update(const MlpParams& online, MlpParams& target, double tau) {
    const auto src = online.tensors();
    auto dst = target.tensors();
    if (src.size() != dst.size()) throw ConfigError("soft_update: network structures differ");
    for (std::size_t k = 0; k < src.size(); ++k) {
        if (src[k]->shape() != dst[k]->shape()) throw ConfigError("soft_update: parameter shapes differ");
        for (std::size_t i = 0; i < src[k]->size(); ++i)
            (*dst[k])[i] = (1.0 - tau) * (*dst[k])[i] + tau * (*src[k])[i];
    }
}

inline void soft_update(SacAgent& agent, double tau) {
    for (std::size_t k = 0; k < 2; ++k) soft_update(agent.critics[k], agent.targets[k], tau);
}

inline void save_agent(Checkpoint& ck, const SacAgent& a) {
    ck.put_mlp("actor", a.actor);
    ck.put_mlp("critic0", a.critics[0]);
    ck.put_mlp("critic1", a.critics[1]);
    ck.put_mlp("target0", a.targets[0]);
    ck.put_mlp("target1", a.targets[1]);
    ck.put("log_alpha", a.log_alpha);
}

inline void load_agent(const Checkpoint& ck, SacAgent& a) {
    ck.load_mlp("actor", a.actor);
    ck.load_mlp("critic0", a.critics[0]);
    ck.load_mlp("critic1", a.critics[1]);
    ck.load_mlp("target0", a.targets[0]);
    ck.load_mlp("target1", a.targets[1]);
    ck.load_into("log_alpha", a.log_alpha);
}

}  // namespace lili
