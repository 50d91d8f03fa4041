#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lili/sac/sac.hpp"
#include "support/gradcheck.hpp"

using namespace lili;
using lili::testing::check_gradients;

namespace {

SacAgent small_agent(std::size_t obs, std::size_t act, std::size_t cond, std::uint64_t seed, std::size_t hidden = 8) {
    std::mt19937_64 rng(seed);
    SacConfig cfg;
    cfg.hidden = hidden;
    return make_sac_agent(obs, act, cond, cfg, rng);
}

// Network whose every output equals `value`.
void constant_network(MlpParams& p, double value) {
    for (auto* t : p.tensors())
        for (auto& v : t->data()) v = 0.0;
    for (auto& v : p.layers.back().bias.data()) v = value;
}

TransitionBatch random_batch(const SacAgent& agent, std::size_t n, std::mt19937_64& rng, double boundary_rate = 0.3) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TransitionBatch b;
    b.size = n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < agent.obs_dim; ++d) {
            b.s.push_back(g(rng));
            b.s_next.push_back(g(rng));
        }
        for (std::size_t d = 0; d < agent.act_dim; ++d) b.a.push_back(std::tanh(g(rng)));
        b.r.push_back(g(rng));
        const double edge = u(rng) < boundary_rate ? 1.0 : 0.0;
        b.done.push_back(edge);
        b.boundary.push_back(edge);
    }
    return b;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

TransitionBatch one_row(double r, bool edge) {
    TransitionBatch b;
    b.size = 1;
    b.s = {0.2};
    b.a = {0.1};
    b.r = {r};
    b.s_next = {0.3};
    b.done = {edge ? 1.0 : 0.0};
    b.boundary = b.done;
    return b;
}

}  // namespace

TEST(Policy, ZeroActorIsDeterministicallyStill) {
    auto agent = small_agent(3, 2, 0, 1);
    constant_network(agent.actor, 0.0);
    std::mt19937_64 rng(1);
    const std::vector<double> s{0.4, -1.0, 2.0};
    EXPECT_EQ(select_action(agent, s, {}, ActionMode::deterministic, rng), (std::vector<double>{0.0, 0.0}));
}

TEST(Policy, SameSeedSameActions) {
    auto agent = small_agent(2, 2, 3, 2);
    const std::vector<double> s{0.1, 0.2}, z{1.0, -1.0, 0.5};
    std::mt19937_64 r1(42), r2(42);
    for (int i = 0; i < 20; ++i)
        EXPECT_EQ(select_action(agent, s, z, ActionMode::stochastic, r1), select_action(agent, s, z, ActionMode::stochastic, r2));
}

TEST(Policy, ActionsStayInsideTheBox) {
    auto agent = small_agent(2, 2, 0, 3);
    for (auto& v : agent.actor.layers.back().bias.data()) v = 5.0;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i)
        for (double a : select_action(agent, random_vec(2, rng), {}, ActionMode::stochastic, rng)) {
            EXPECT_GT(a, -1.0);
            EXPECT_LE(a, 1.0);
        }
}

TEST(Policy, LatentWidthMismatchIsRejected) {
    auto agent = small_agent(2, 1, 4, 4);
    std::mt19937_64 rng(4);
    const std::vector<double> s{0.0, 0.0}, z{1.0};
    EXPECT_THROW(select_action(agent, s, z, ActionMode::deterministic, rng), ConfigError);
}

TEST(Critic, ZeroEverythingGivesZeroLoss) {
    auto agent = small_agent(1, 1, 0, 5);
    for (auto& c : agent.critics) constant_network(c, 0.0);
    for (auto& c : agent.targets) constant_network(c, 0.0);
    agent.log_alpha[0] = -800.0;
    std::mt19937_64 rng(5);
    auto b = one_row(0.0, false);
    EXPECT_EQ(critic_loss(agent, b, {}, {}, 0.99, false, rng), 0.0);
}

TEST(Critic, SingleRowMatchesHandComputation) {
    auto agent = small_agent(1, 1, 0, 6);
    for (auto& c : agent.critics) constant_network(c, 0.7);
    for (auto& c : agent.targets) constant_network(c, 0.4);
    agent.log_alpha[0] = -800.0;
    std::mt19937_64 rng(6);
    const double y = 0.5 + 0.9 * 0.4;
    EXPECT_NEAR(critic_targets(agent, one_row(0.5, false), {}, {}, 0.9, false, rng).y[0], y, 1e-15);
    EXPECT_NEAR(critic_loss(agent, one_row(0.5, false), {}, {}, 0.9, false, rng), 2.0 * (0.7 - y) * (0.7 - y), 1e-14);
}

TEST(Critic, TargetUsesTheSmallerTwin) {
    for (int order = 0; order < 2; ++order) {
        auto agent = small_agent(1, 1, 0, 7);
        constant_network(agent.targets[order], 0.4);
        constant_network(agent.targets[1 - order], 1.0);
        agent.log_alpha[0] = -800.0;
        std::mt19937_64 rng(7);
        EXPECT_NEAR(critic_targets(agent, one_row(0.0, false), {}, {}, 0.5, false, rng).y[0], 0.2, 1e-15);
    }
}

TEST(Critic, EntropyBonusEntersTheTarget) {
    auto agent = small_agent(1, 1, 0, 8);
    for (auto& c : agent.targets) constant_network(c, 0.0);
    constant_network(agent.actor, 0.0);
    agent.log_alpha[0] = std::log(0.5);
    std::mt19937_64 rng(8), replay(8);
    const double y = critic_targets(agent, one_row(0.0, false), {}, {}, 1.0, false, rng).y[0];
    // Redraw the same noise and evaluate log pi by hand.
    std::normal_distribution<double> n(0.0, 1.0);
    const double eps = n(replay);
    const double a = std::tanh(eps);
    const double log_pi = -0.5 * eps * eps - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(1.0 - a * a);
    EXPECT_NEAR(y, -0.5 * log_pi, 1e-6);
}

TEST(Critic, SeveredBoundaryTargetIsTheReward) {
    auto agent = small_agent(1, 1, 0, 9);
    std::mt19937_64 rng(9);
    EXPECT_EQ(critic_targets(agent, one_row(0.37, true), {}, {}, 0.99, false, rng).y[0], 0.37);
}

TEST(Critic, SeveredTargetsDependOnlyOnTheirOwnRow) {
    auto agent = small_agent(2, 1, 3, 10);
    // Near-deterministic next actions so the noise draw order does not matter.
    auto& head = agent.actor.layers.back();
    for (std::size_t i = 0; i < head.weight.rows(); ++i) head.weight.at(i, 1) = 0.0;
    head.bias[1] = -20.0;
    agent.log_alpha[0] = -800.0;
    std::mt19937_64 rng(10);
    auto b = random_batch(agent, 12, rng, 0.5);
    auto z = random_vec(12 * 3, rng);
    const auto y = critic_targets(agent, b, z, {}, 0.99, false, rng).y;

    std::vector<std::size_t> perm(12);
    for (std::size_t i = 0; i < 12; ++i) perm[i] = (i * 5 + 3) % 12;
    TransitionBatch p;
    p.size = 12;
    std::vector<double> zp;
    for (auto k : perm) {
        p.s.insert(p.s.end(), b.s.begin() + k * 2, b.s.begin() + k * 2 + 2);
        p.s_next.insert(p.s_next.end(), b.s_next.begin() + k * 2, b.s_next.begin() + k * 2 + 2);
        p.a.push_back(b.a[k]);
        p.r.push_back(b.r[k]);
        p.done.push_back(b.done[k]);
        p.boundary.push_back(b.boundary[k]);
        zp.insert(zp.end(), z.begin() + k * 3, z.begin() + k * 3 + 3);
    }
    const auto yp = critic_targets(agent, p, zp, {}, 0.99, false, rng).y;
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(yp[i], y[perm[i]], 1e-6);
}

TEST(Critic, CrossBoundaryTargetsFollowNextLatentAtBoundariesOnly) {
    auto agent = small_agent(2, 1, 3, 11, 16);
    std::mt19937_64 rng(11);
    auto b = random_batch(agent, 16, rng, 0.4);
    auto z = random_vec(16 * 3, rng);
    auto zn = random_vec(16 * 3, rng);
    auto zn2 = zn;
    for (auto& v : zn2) v += 0.5;
    std::mt19937_64 r1(1), r2(1);
    const auto y1 = critic_targets(agent, b, z, zn, 0.99, true, r1).y;
    const auto y2 = critic_targets(agent, b, z, zn2, 0.99, true, r2).y;
    int boundaries = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        if (b.boundary[i] > 0.5) {
            ++boundaries;
            EXPECT_NE(y1[i], y2[i]);
        } else {
            EXPECT_EQ(y1[i], y2[i]);
        }
    }
    EXPECT_GT(boundaries, 0);
}

TEST(Critic, CrossBoundaryWithoutNextLatentIsAUsageError) {
    auto agent = small_agent(2, 1, 3, 12);
    std::mt19937_64 rng(12);
    auto b = random_batch(agent, 4, rng);
    auto z = random_vec(12, rng);
    EXPECT_THROW(critic_targets(agent, b, z, {}, 0.99, true, rng), UsageError);
}

TEST(Critic, GradientsMatchFiniteDifferencesIncludingLatent) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        auto agent = small_agent(2, 2, 3, 300 + trial);
        auto b = random_batch(agent, 6, rng);
        Tensor z = Tensor::matrix(6, 3);
        for (auto& v : z.data()) v = std::normal_distribution<double>(0.0, 1.0)(rng);
        std::mt19937_64 trng(trial);
        const auto targets = critic_targets(agent, b, z.data(), random_vec(18, rng), 0.99, true, trng);
        auto params = agent.critic_tensors();
        params.push_back(&z);
        auto res = check_gradients(params, [&] {
            ad::Tape tape;
            auto loss = critic_loss_on_tape(agent, tape, b, tape.param(z), targets);
            tape.backward(loss);
            return loss.item();
        });
        EXPECT_GE(res.pass_fraction(), 0.99) << "worst " << res.worst;
    }
}

namespace {

// Q(s, a) = -|a| for a single action dimension.
void abs_critic(MlpParams& q) {
    constant_network(q, 0.0);
    q.layers[0].weight.at(1, 0) = 1.0;
    q.layers[0].weight.at(1, 1) = -1.0;
    q.layers[1].weight.at(0, 0) = 1.0;
    q.layers[1].weight.at(1, 1) = 1.0;
    q.layers[2].weight.at(0, 0) = -1.0;
    q.layers[2].weight.at(1, 0) = -1.0;
}

}  // namespace

TEST(Actor, BanditGradientPushesTheMeanTowardTheOptimum) {
    for (double start : {0.6, -0.6}) {
        auto agent = small_agent(1, 1, 0, 14);
        for (auto& c : agent.critics) abs_critic(c);
        constant_network(agent.actor, 0.0);
        agent.actor.layers.back().bias[0] = start;
        agent.actor.layers.back().bias[1] = -3.0;
        agent.log_alpha[0] = -800.0;
        std::mt19937_64 rng(14);
        auto b = one_row(0.0, false);
        b.size = 32;
        b.s.assign(32, 0.2);
        b.a.assign(32, 0.0);
        actor_loss(agent, b, {}, rng);
        const double g = agent.actor.layers.back().bias.grad()[0];
        EXPECT_GT(g * start, 0.0);

        AdamState opt(AdamConfig{.lr = 1e-2}, agent.actor.tensors());
        for (auto* t : agent.actor.tensors()) t->clear_grad();
        for (int i = 0; i < 300; ++i) {
            actor_loss(agent, b, {}, rng);
            adam_step(agent.actor.tensors(), opt);
        }
        const std::vector<double> s{0.2};
        EXPECT_LT(std::abs(select_action(agent, s, {}, ActionMode::deterministic, rng)[0]), 0.1);
    }
}

TEST(Actor, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 5; ++trial) {
        auto agent = small_agent(2, 2, 3, 400 + trial);
        auto b = random_batch(agent, 6, rng);
        auto z = random_vec(18, rng);
        auto res = check_gradients(agent.actor.tensors(), [&] {
            std::mt19937_64 noise(trial);
            return actor_loss(agent, b, z, noise).loss;
        });
        EXPECT_GE(res.pass_fraction(), 0.99) << "worst " << res.worst;
    }
}

TEST(Actor, CriticsReceiveNoGradient) {
    auto agent = small_agent(2, 1, 0, 16);
    std::mt19937_64 rng(16);
    auto b = random_batch(agent, 4, rng);
    actor_loss(agent, b, {}, rng);
    for (auto* t : agent.critic_tensors()) EXPECT_FALSE(t->has_grad());
}

TEST(Temperature, NoGradientAtTargetEntropy) {
    auto agent = small_agent(1, 2, 0, 17);
    const std::vector<double> lp(5, -agent.target_entropy);
    temperature_loss(agent, lp);
    EXPECT_EQ(agent.log_alpha.grad()[0], 0.0);
}

TEST(Temperature, AlphaShrinksWhenEntropyExceedsTarget) {
    auto agent = small_agent(1, 2, 0, 18);
    AdamState opt(AdamConfig{.lr = 1e-2}, {&agent.log_alpha});
    double alpha = agent.alpha();
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> lp(5, -agent.target_entropy - 1.0);
        temperature_loss(agent, lp);
        adam_step({&agent.log_alpha}, opt);
        EXPECT_LT(agent.alpha(), alpha);
        EXPECT_GT(agent.alpha(), 0.0);
        alpha = agent.alpha();
    }
}

TEST(Temperature, AlphaGrowsWhenEntropyFallsShort) {
    auto agent = small_agent(1, 2, 0, 19);
    AdamState opt(AdamConfig{.lr = 1e-2}, {&agent.log_alpha});
    const double before = agent.alpha();
    const std::vector<double> lp(5, -agent.target_entropy + 2.0);
    temperature_loss(agent, lp);
    adam_step({&agent.log_alpha}, opt);
    EXPECT_GT(agent.alpha(), before);
}

TEST(Temperature, GradientMatchesFiniteDifference) {
    auto agent = small_agent(1, 2, 0, 20);
    std::mt19937_64 rng(20);
    const auto lp = random_vec(7, rng);
    auto res = check_gradients({&agent.log_alpha}, [&] { return temperature_loss(agent, lp); });
    EXPECT_EQ(res.passed, res.checked);
}

TEST(SoftUpdate, TauOneCopiesAndTauZeroKeeps) {
    auto agent = small_agent(2, 1, 0, 21);
    auto keep = agent.targets[0];
    soft_update(agent.critics[0], agent.targets[0], 0.0);
    EXPECT_EQ(agent.targets[0].layers[1].weight.data(), keep.layers[1].weight.data());
    soft_update(agent.critics[0], agent.targets[0], 1.0);
    for (std::size_t l = 0; l < 3; ++l)
        EXPECT_EQ(agent.targets[0].layers[l].weight.data(), agent.critics[0].layers[l].weight.data());
}

TEST(SoftUpdate, SmallTauMovesByTauTimesTheGap) {
    auto agent = small_agent(2, 1, 0, 22);
    for (auto& c : agent.targets) constant_network(c, 0.0);
    for (auto& c : agent.critics) constant_network(c, 1.0);
    soft_update(agent, 0.005);
    EXPECT_NEAR(agent.targets[0].layers.back().bias[0], 0.005, 1e-15);
    EXPECT_NEAR(agent.targets[1].layers.back().bias[0], 0.005, 1e-15);
}

TEST(SoftUpdate, MismatchedStructureIsRejected) {
    auto a = small_agent(2, 1, 0, 23, 8);
    auto b = small_agent(2, 1, 0, 23, 4);
    EXPECT_THROW(soft_update(a.critics[0], b.targets[0], 0.5), ConfigError);
}

TEST(Sac, RandomUpdatesStayFinite) {
    auto agent = small_agent(3, 2, 2, 24);
    std::mt19937_64 rng(24);
    AdamState actor(AdamConfig{.lr = 3e-3}, agent.actor.tensors());
    AdamState critic(AdamConfig{.lr = 3e-3}, agent.critic_tensors());
    AdamState temp(AdamConfig{.lr = 3e-3}, {&agent.log_alpha});
    for (int step = 0; step < 10000; ++step) {
        auto b = random_batch(agent, 8, rng);
        for (auto& r : b.r) r *= 10.0;
        auto z = random_vec(16, rng);
        auto zn = random_vec(16, rng);
        critic_loss(agent, b, z, zn, 0.99, step % 2 == 0, rng);
        adam_step(agent.critic_tensors(), critic);
        auto out = actor_loss(agent, b, z, rng);
        adam_step(agent.actor.tensors(), actor);
        temperature_loss(agent, out.log_prob);
        adam_step({&agent.log_alpha}, temp);
        soft_update(agent, 0.005);
        ASSERT_TRUE(std::isfinite(out.loss)) << "step " << step;
    }
    EXPECT_TRUE(agent.actor.all_finite());
    EXPECT_TRUE(agent.critics[0].all_finite() && agent.critics[1].all_finite());
    EXPECT_TRUE(std::isfinite(agent.alpha()) && agent.alpha() > 0.0);
}

TEST(Sac, CheckpointRoundTrip) {
    auto agent = small_agent(2, 2, 3, 25);
    agent.log_alpha[0] = -1.25;
    Checkpoint ck;
    save_agent(ck, agent);
    auto other = small_agent(2, 2, 3, 26);
    load_agent(ck, other);
    std::mt19937_64 r1(5), r2(5);
    const std::vector<double> s{0.3, 0.1}, z{0.0, 1.0, 2.0};
    EXPECT_EQ(select_action(agent, s, z, ActionMode::stochastic, r1), select_action(other, s, z, ActionMode::stochastic, r2));
    EXPECT_EQ(other.alpha(), agent.alpha());
    EXPECT_EQ(other.targets[1].layers[0].weight.data(), agent.targets[1].layers[0].weight.data());
}
