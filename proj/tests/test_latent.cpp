#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lili/autodiff/adam.hpp"
#include "lili/latent/model.hpp"
#include "support/gradcheck.hpp"

using namespace lili;
using lili::testing::check_gradients;

namespace {

Interaction random_interaction(std::size_t index, std::size_t obs, std::size_t act, std::size_t len,
                               std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Interaction it;
    it.index = index;
    it.obs_dim = obs;
    it.act_dim = act;
    it.states.resize((len + 1) * obs);
    it.actions.resize(len * act);
    it.rewards.resize(len);
    for (auto& v : it.states) v = n(rng);
    for (auto& v : it.actions) v = std::tanh(n(rng));
    for (auto& v : it.rewards) v = n(rng);
    return it;
}

void zero_network(MlpParams& p) {
    for (auto* t : p.tensors())
        for (auto& v : t->data()) v = 0.0;
}

LatentModel small_model(std::size_t obs, std::size_t act, std::uint64_t seed, std::size_t hidden = 16) {
    std::mt19937_64 rng(seed);
    LatentConfig cfg;
    cfg.hidden = hidden;
    return make_latent_model(obs, act, cfg, rng);
}

}  // namespace

TEST(Encoder, ZeroNetworkGivesZeroLatent) {
    std::mt19937_64 rng(1);
    auto m = small_model(2, 2, 1);
    zero_network(m.encoder);
    auto it = random_interaction(0, 2, 2, 10, rng);
    const Interaction* w[] = {&it};
    const auto z = encode(m, all_tuples(w));
    ASSERT_EQ(z.size(), 8u);
    for (double v : z) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, OutputHasLatentWidth) {
    std::mt19937_64 rng(2);
    auto m = small_model(3, 1, 2);
    auto it = random_interaction(0, 3, 1, 7, rng);
    const Interaction* w[] = {&it};
    EXPECT_EQ(encode(m, all_tuples(w)).size(), m.latent_dim);
}

TEST(Encoder, PermutingTuplesLeavesLatentUnchanged) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto m = small_model(2, 2, 100 + trial);
        auto it = random_interaction(0, 2, 2, 5 + trial, rng);
        const Interaction* w[] = {&it};
        auto tuples = all_tuples(w);
        const auto z = encode(m, tuples);

        const std::size_t width = m.tuple_width();
        std::vector<std::size_t> perm(tuples.count);
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        TupleSet shuffled;
        shuffled.count = tuples.count;
        for (auto p : perm)
            shuffled.rows.insert(shuffled.rows.end(), tuples.rows.begin() + p * width,
                                 tuples.rows.begin() + (p + 1) * width);
        EXPECT_EQ(encode(m, shuffled), z);
    }
}

TEST(Encoder, EmptyInteractionIsAUsageError) {
    auto m = small_model(2, 2, 4);
    Interaction empty;
    empty.obs_dim = 2;
    empty.act_dim = 2;
    empty.states.assign(2, 0.0);
    const Interaction* w[] = {&empty};
    EXPECT_THROW(encode(m, all_tuples(w)), UsageError);
}

TEST(Encoder, BudgetSamplesDistinctTuples) {
    std::mt19937_64 rng(5);
    auto it = random_interaction(0, 1, 1, 40, rng);
    const Interaction* w[] = {&it};
    auto sub = gather_tuples(w, 12, rng);
    ASSERT_EQ(sub.count, 12u);
    std::vector<double> first_cols;
    for (std::size_t k = 0; k < sub.count; ++k) first_cols.push_back(sub.rows[k * 4]);
    std::sort(first_cols.begin(), first_cols.end());
    EXPECT_EQ(std::adjacent_find(first_cols.begin(), first_cols.end()), first_cols.end());
}

TEST(Decoder, ZeroNetworkPredictsZeroMeans) {
    auto m = small_model(2, 2, 6);
    zero_network(m.decoder);
    ad::Tape tape;
    auto s = tape.constant(3, 2, std::vector<double>(6, 1.0));
    auto a = tape.constant(3, 2, std::vector<double>(6, -1.0));
    auto z = tape.constant(3, 8, std::vector<double>(24, 0.5));
    auto pred = decode_on_tape(m, s, a, z, Binding::frozen);
    for (double v : pred.next_state.value()) EXPECT_EQ(v, 0.0);
    for (double v : pred.reward.value()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(pred.next_state.cols(), 2u);
    EXPECT_EQ(pred.reward.cols(), 1u);
}

TEST(Decoder, WrongLatentWidthIsRejected) {
    auto m = small_model(2, 2, 7);
    ad::Tape tape;
    auto s = tape.constant(1, 2, std::vector<double>(2));
    auto a = tape.constant(1, 2, std::vector<double>(2));
    auto z = tape.constant(1, 5, std::vector<double>(5));
    EXPECT_THROW(decode_on_tape(m, s, a, z, Binding::frozen), ConfigError);
}

TEST(Decoder, FitsDeterministicToyDynamics) {
    // s' = s + a, r = -|s| on s, a in [-1, 1].
    std::mt19937_64 rng(8);
    LatentConfig cfg;
    cfg.hidden = 64;
    auto m = make_latent_model(1, 1, cfg, rng);
    std::vector<double> s, a, s2, r;
    for (int i = -20; i <= 20; ++i)
        for (int j = -4; j <= 4; ++j) {
            s.push_back(0.05 * i);
            a.push_back(0.25 * j);
            s2.push_back(s.back() + a.back());
            r.push_back(-std::abs(s.back()));
            const double row[] = {s2.back(), r.back()};
            m.targets.update(row);
        }
    const std::size_t n = s.size();
    const auto tgt = normalized_targets(m, s2, r);
    const std::vector<double> zeros(n * 8, 0.0);
    AdamState opt(AdamConfig{.lr = 3e-3}, m.decoder.tensors());
    for (int step = 0; step < 5000; ++step) {
        opt.config.lr = std::max(3e-3 * std::pow(0.999, step), 2e-5);
        ad::Tape tape;
        auto pred = decode_on_tape(m, tape.constant(n, 1, s), tape.constant(n, 1, a), tape.constant(n, 8, zeros),
                                   Binding::trainable);
        tape.backward(reconstruction_loss(pred, tape.constant(n, 2, tgt)));
        adam_step(m.decoder.tensors(), opt);
    }
    double worst = 0.0;
    std::uniform_real_distribution<double> u(-0.95, 0.95);
    for (int k = 0; k < 200; ++k) {
        const double sv = u(rng), av = u(rng);
        ad::Tape tape;
        auto pred = decode_on_tape(m, tape.constant(1, 1, {sv}), tape.constant(1, 1, {av}),
                                   tape.constant(1, 8, std::vector<double>(8, 0.0)), Binding::frozen);
        const double ps = pred.next_state.item() * m.targets.stddev(0) + m.targets.mean(0);
        const double pr = pred.reward.item() * m.targets.stddev(1) + m.targets.mean(1);
        worst = std::max({worst, std::abs(ps - (sv + av)), std::abs(pr + std::abs(sv))});
    }
    EXPECT_LT(worst, 1e-2);
}

TEST(Normalizer, MatchesTwoPassMoments) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(3.0, 2.0);
    RunningNormalizer norm(2);
    std::vector<double> xs, ys;
    for (int i = 0; i < 500; ++i) {
        const double row[] = {n(rng), -n(rng)};
        xs.push_back(row[0]);
        ys.push_back(row[1]);
        norm.update(row);
    }
    auto check = [&](const std::vector<double>& v, std::size_t d) {
        double mu = 0.0;
        for (double x : v) mu += x;
        mu /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mu) * (x - mu);
        const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
        EXPECT_NEAR(norm.mean(d), mu, 1e-12);
        EXPECT_NEAR(norm.stddev(d), sd, 1e-12);
    };
    check(xs, 0);
    check(ys, 1);
}

TEST(Normalizer, IdentityUntilTwoSamples) {
    RunningNormalizer norm(1);
    EXPECT_EQ(norm.normalize(0, 4.0), 4.0);
    const double x[] = {10.0};
    norm.update(x);
    EXPECT_EQ(norm.normalize(0, 4.0), 4.0);
}

namespace {

// A pair where every next-interaction target is exactly zero.
std::pair<Interaction, Interaction> zero_target_pair(std::mt19937_64& rng) {
    auto prev = random_interaction(4, 2, 2, 6, rng);
    auto next = random_interaction(5, 2, 2, 6, rng);
    for (std::size_t i = 2; i < next.states.size(); ++i) next.states[i] = 0.0;
    for (auto& r : next.rewards) r = 0.0;
    return {prev, next};
}

}  // namespace

TEST(RepLoss, ExactPredictionGivesZero) {
    std::mt19937_64 rng(10);
    auto m = small_model(2, 2, 10);
    zero_network(m.decoder);
    auto [prev, next] = zero_target_pair(rng);
    const Interaction* w[] = {&prev};
    EXPECT_EQ(rep_loss(m, w, next, 1000, rng, Binding::frozen), 0.0);
}

TEST(RepLoss, RewardOffsetGivesHalfSquaredError) {
    std::mt19937_64 rng(11);
    auto m = small_model(2, 2, 11);
    zero_network(m.decoder);
    auto [prev, next] = zero_target_pair(rng);
    const double e = 0.3;
    for (auto& r : next.rewards) r = e;
    const Interaction* w[] = {&prev};
    EXPECT_NEAR(rep_loss(m, w, next, 1000, rng, Binding::frozen), 0.5 * e * e, 1e-15);
}

TEST(RepLoss, NonConsecutivePairIsAUsageError) {
    std::mt19937_64 rng(12);
    auto m = small_model(2, 2, 12);
    auto prev = random_interaction(3, 2, 2, 4, rng);
    auto next = random_interaction(5, 2, 2, 4, rng);
    const Interaction* w[] = {&prev};
    EXPECT_THROW(rep_loss(m, w, next, 32, rng, Binding::trainable), UsageError);
}

TEST(RepLoss, OverfitsASinglePair) {
    std::mt19937_64 rng(13);
    auto m = small_model(2, 2, 13, 32);
    auto prev = random_interaction(0, 2, 2, 10, rng);
    auto next = random_interaction(1, 2, 2, 10, rng);
    const Interaction* w[] = {&prev};
    AdamState enc(AdamConfig{.lr = 1e-3}, m.encoder.tensors());
    AdamState dec(AdamConfig{.lr = 1e-3}, m.decoder.tensors());
    const double before = rep_loss(m, w, next, 1000, rng, Binding::frozen);
    for (int i = 0; i < 200; ++i) {
        rep_loss(m, w, next, 1000, rng, Binding::trainable);
        adam_step(m.encoder.tensors(), enc);
        adam_step(m.decoder.tensors(), dec);
    }
    const double after = rep_loss(m, w, next, 1000, rng, Binding::frozen);
    EXPECT_LE(after, 0.5 * before) << before << " -> " << after;
}

TEST(RepLoss, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = small_model(2, 2, 200 + trial, 12);
        auto prev = random_interaction(0, 2, 2, 5, rng);
        auto next = random_interaction(1, 2, 2, 5, rng);
        for (int i = 0; i < 3; ++i) {
            const double row[] = {rng() % 7 * 0.3, rng() % 5 * -0.2, rng() % 3 * 0.5};
            m.targets.update(row);
        }
        const Interaction* w[] = {&prev};
        auto params = m.encoder.tensors();
        for (auto* t : m.decoder.tensors()) params.push_back(t);
        auto res = check_gradients(params, [&] { return rep_loss(m, w, next, 1000, rng, Binding::trainable); });
        EXPECT_GE(res.pass_fraction(), 0.99) << "worst " << res.worst;
    }
}

TEST(Decoder, LatentGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(15);
    auto m = small_model(2, 2, 15, 12);
    Tensor z = Tensor::matrix(4, 8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : z.data()) v = n(rng);
    std::vector<double> s(8), a(8), tgt(12);
    for (auto& v : s) v = n(rng);
    for (auto& v : a) v = n(rng);
    for (auto& v : tgt) v = n(rng);
    auto res = check_gradients({&z}, [&] {
        ad::Tape tape;
        auto pred = decode_on_tape(m, tape.constant(4, 2, s), tape.constant(4, 2, a), tape.param(z), Binding::frozen);
        auto loss = reconstruction_loss(pred, tape.constant(4, 3, tgt));
        tape.backward(loss);
        return loss.item();
    });
    EXPECT_GE(res.pass_fraction(), 0.99) << "worst " << res.worst;
}

TEST(LatentCheckpoint, RoundTripsEncoderDecoderAndNormalizer) {
    std::mt19937_64 rng(16);
    auto m = small_model(2, 2, 16);
    const double row[] = {1.0, 2.0, 3.0};
    const double row2[] = {-1.0, 0.5, 4.0};
    m.targets.update(row);
    m.targets.update(row2);
    Checkpoint ck;
    save_latent(ck, m);
    auto other = small_model(2, 2, 99);
    load_latent(ck, other);
    auto it = random_interaction(0, 2, 2, 5, rng);
    const Interaction* w[] = {&it};
    EXPECT_EQ(encode(m, all_tuples(w)), encode(other, all_tuples(w)));
    EXPECT_EQ(other.targets.mean(2), m.targets.mean(2));
    EXPECT_EQ(other.targets.stddev(1), m.targets.stddev(1));
}
