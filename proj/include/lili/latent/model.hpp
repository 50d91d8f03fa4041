#pragma once

// Strategy encoder and transition/reward decoder.
//
// The encoder embeds each (s, a, s', r) tuple of the previous interaction(s)
// with a shared MLP and mean-pools the embeddings into z. The decoder
// predicts the next interaction's s' and r from (s, a, z) under a
// unit-variance Gaussian per output, so the negative log-likelihood is a
// squared error up to a constant.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lili/autodiff/checkpoint.hpp"
#include "lili/autodiff/mlp.hpp"
#include "lili/autodiff/tape.hpp"
#include "lili/env/types.hpp"

namespace lili {

struct LatentConfig {
    std::size_t latent_dim = 8;
    std::size_t hidden = 128;
    std::size_t tuple_budget = 32;
    bool operator==(const LatentConfig&) const = default;
};

/// Per-dimension running mean and variance (Welford).
class RunningNormalizer {
public:
    RunningNormalizer() = default;
    explicit RunningNormalizer(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

    void update(std::span<const double> x) {
        ++count_;
        for (std::size_t i = 0; i < mean_.size(); ++i) {
            const double d = x[i] - mean_[i];
            mean_[i] += d / static_cast<double>(count_);
            m2_[i] += d * (x[i] - mean_[i]);
        }
    }

    [[nodiscard]] double mean(std::size_t i) const { return count_ > 1 ? mean_[i] : 0.0; }
    [[nodiscard]] double stddev(std::size_t i) const {
        if (count_ < 2) return 1.0;
        return std::max(std::sqrt(m2_[i] / static_cast<double>(count_ - 1)), 1e-3);
    }
    [[nodiscard]] double normalize(std::size_t i, double v) const { return (v - mean(i)) / stddev(i); }
    [[nodiscard]] std::size_t dim() const noexcept { return mean_.size(); }
    [[nodiscard]] std::uint64_t count() const noexcept { return count_; }

    void save(Checkpoint& ck, const std::string& prefix) const {
        ck.put(prefix + "/mean", Tensor(Shape{mean_.size()}, mean_));
        ck.put(prefix + "/m2", Tensor(Shape{m2_.size()}, m2_));
        ck.put(prefix + "/count", Tensor(Shape{1}, std::vector<double>{static_cast<double>(count_)}));
    }
    void load(const Checkpoint& ck, const std::string& prefix) {
        mean_ = ck.get(prefix + "/mean").data();
        m2_ = ck.get(prefix + "/m2").data();
        count_ = static_cast<std::uint64_t>(ck.get(prefix + "/count")[0]);
    }

private:
    std::vector<double> mean_;
    std::vector<double> m2_;
    std::uint64_t count_ = 0;
};

struct LatentModel {
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    std::size_t latent_dim = 8;
    MlpParams encoder;
    MlpParams decoder;
    RunningNormalizer targets;  // decoder targets: s' dims then r

    [[nodiscard]] std::size_t tuple_width() const { return 2 * obs_dim + act_dim + 1; }
};

template <class Rng>
LatentModel make_latent_model(std::size_t obs_dim, std::size_t act_dim, const LatentConfig& cfg, Rng& rng) {
    LatentModel m;
    m.obs_dim = obs_dim;
    m.act_dim = act_dim;
    m.latent_dim = cfg.latent_dim;
    m.encoder = make_mlp({m.tuple_width(), cfg.hidden, cfg.hidden, cfg.latent_dim}, Activation::relu, {{"z", cfg.latent_dim}},
                         rng);
    m.decoder = make_mlp({obs_dim + act_dim + cfg.latent_dim, cfg.hidden, cfg.hidden, obs_dim + 1}, Activation::relu,
                         {{"next_state", obs_dim}, {"reward", 1}}, rng);
    m.targets = RunningNormalizer(obs_dim + 1);
    return m;
}

/// Encoder input rows (s, a, s', r), row-major.
struct TupleSet {
    std::vector<double> rows;
    std::size_t count = 0;
};

/// Sorts tuple rows lexicographically. The encoder sees a canonical order,
/// so z is bit-for-bit independent of how the tuples were listed.
inline void canonicalize(TupleSet& set, std::size_t width) {
    std::vector<std::size_t> order(set.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto row = [&](std::size_t k) { return set.rows.begin() + static_cast<std::ptrdiff_t>(k * width); };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(row(a), row(a) + static_cast<std::ptrdiff_t>(width), row(b),
                                            row(b) + static_cast<std::ptrdiff_t>(width));
    });
    std::vector<double> sorted;
    sorted.reserve(set.rows.size());
    for (auto k : order) sorted.insert(sorted.end(), row(k), row(k) + static_cast<std::ptrdiff_t>(width));
    set.rows = std::move(sorted);
}

/// Appends the tuple for step t of `it` to `out`.
inline void append_tuple(const Interaction& it, std::size_t t, std::vector<double>& out) {
    const auto s = it.state(t), s2 = it.state(t + 1), a = it.action(t);
    out.insert(out.end(), s.begin(), s.end());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), s2.begin(), s2.end());
    out.push_back(it.rewards[t]);
}

/// Tuples from the concatenation of `window` (oldest first).
///
/// If the window holds more than `budget` tuples, `budget` of them are drawn
/// uniformly without replacement; otherwise every tuple is used in order.
template <class Rng>
TupleSet gather_tuples(std::span<const Interaction* const> window, std::size_t budget, Rng& rng) {
    std::size_t total = 0;
    for (const auto* it : window) total += it->length();
    if (total == 0) throw UsageError("cannot encode an empty interaction");
    TupleSet out;
    auto locate = [&](std::size_t k) {
        for (const auto* it : window) {
            if (k < it->length()) return std::pair{it, k};
            k -= it->length();
        }
        return std::pair{window.back(), std::size_t{0}};
    };
    if (budget >= total) {
        for (std::size_t k = 0; k < total; ++k) {
            auto [it, t] = locate(k);
            append_tuple(*it, t, out.rows);
        }
        out.count = total;
        canonicalize(out, out.rows.size() / total);
        return out;
    }
    // Partial Fisher-Yates over tuple indices.
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < budget; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, total - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    for (std::size_t k = 0; k < budget; ++k) {
        auto [it, t] = locate(idx[k]);
        append_tuple(*it, t, out.rows);
    }
    out.count = budget;
    canonicalize(out, out.rows.size() / budget);
    return out;
}

/// Every tuple of `window`, in order (the rollout-time encoder input).
inline TupleSet all_tuples(std::span<const Interaction* const> window) {
    std::mt19937_64 unused(0);
    return gather_tuples(window, static_cast<std::size_t>(-1), unused);
}

/// Pools tuple embeddings per segment: rows of `tuples` in [offsets[g], offsets[g+1]) form z_g.
inline ad::Var encode_on_tape(LatentModel& m, ad::Var tuples, std::vector<std::size_t> offsets, Binding binding) {
    ad::Var emb = mlp_forward(m.encoder, tuples, binding);
    return ad::segment_mean(emb, std::move(offsets));
}

inline ad::Var encode_on_tape(const LatentModel& m, ad::Var tuples, std::vector<std::size_t> offsets) {
    ad::Var emb = mlp_forward(m.encoder, tuples);
    return ad::segment_mean(emb, std::move(offsets));
}

/// z for one tuple set, evaluated without gradients.
inline std::vector<double> encode(const LatentModel& m, const TupleSet& tuples) {
    if (tuples.count == 0) throw UsageError("cannot encode an empty interaction");
    TupleSet canon = tuples;
    canonicalize(canon, m.tuple_width());
    ad::Tape tape;
    ad::Var x = tape.constant(tuples.count, m.tuple_width(), std::move(canon.rows));
    ad::Var z = encode_on_tape(m, x, {0, tuples.count});
    return {z.value().begin(), z.value().end()};
}

struct DecodedMeans {
    ad::Var next_state;  // B x obs_dim, normalised target space
    ad::Var reward;      // B x 1, normalised target space
};

inline DecodedMeans decode_on_tape(LatentModel& m, ad::Var s, ad::Var a, ad::Var z, Binding binding) {
    if (s.cols() != m.obs_dim || a.cols() != m.act_dim || z.cols() != m.latent_dim)
        throw ConfigError("decode: input widths do not match the latent model");
    ad::Var out = mlp_forward(m.decoder, ad::concat_cols({s, a, z}), binding);
    return {mlp_head(m.decoder, out, "next_state"), mlp_head(m.decoder, out, "reward")};
}

/// Normalised decoder targets for rows (s', r).
inline std::vector<double> normalized_targets(const LatentModel& m, std::span<const double> next_states,
                                              std::span<const double> rewards) {
    const std::size_t n = rewards.size();
    std::vector<double> out(n * (m.obs_dim + 1));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < m.obs_dim; ++d)
            out[i * (m.obs_dim + 1) + d] = m.targets.normalize(d, next_states[i * m.obs_dim + d]);
        out[i * (m.obs_dim + 1) + m.obs_dim] = m.targets.normalize(m.obs_dim, rewards[i]);
    }
    return out;
}

/// Mean over rows of 1/2 ||prediction - target||^2, predictions being decoder means.
inline ad::Var reconstruction_loss(const DecodedMeans& pred, ad::Var targets) {
    ad::Var both = ad::concat_cols({pred.next_state, pred.reward});
    ad::Var resid = ad::sub(both, targets);
    return ad::scale(ad::sum(ad::square(resid)), 0.5 / static_cast<double>(resid.rows()));
}

/// Representation loss for one consecutive pair: the encoder sees `prev_window`
/// (oldest first, its last element directly precedes `next`), and the decoder
/// reconstructs every transition of `next`.
template <class Rng>
double rep_loss(LatentModel& m, std::span<const Interaction* const> prev_window, const Interaction& next,
                std::size_t tuple_budget, Rng& rng, Binding binding) {
    if (prev_window.empty() || prev_window.back()->index + 1 != next.index)
        throw UsageError("rep_loss: interactions are not consecutive");
    const auto tuples = gather_tuples(prev_window, tuple_budget, rng);
    ad::Tape tape;
    ad::Var x = tape.constant(tuples.count, m.tuple_width(), tuples.rows);
    ad::Var z = binding == Binding::trainable ? encode_on_tape(m, x, {0, tuples.count}, binding)
                                              : encode_on_tape(std::as_const(m), x, {0, tuples.count});
    const std::size_t n = next.length();
    std::vector<std::size_t> rep(n, 0);
    ad::Var zr = ad::gather_rows(z, rep);
    ad::Var s = tape.constant(n, m.obs_dim, {next.states.begin(), next.states.begin() + n * m.obs_dim});
    ad::Var a = tape.constant(n, m.act_dim, next.actions);
    auto pred = decode_on_tape(m, s, a, zr, binding);
    std::span<const double> s2(next.states.data() + m.obs_dim, n * m.obs_dim);
    ad::Var tgt = tape.constant(n, m.obs_dim + 1, normalized_targets(m, s2, next.rewards));
    ad::Var loss = reconstruction_loss(pred, tgt);
    if (binding == Binding::trainable) tape.backward(loss);
    return loss.item();
}

inline void save_latent(Checkpoint& ck, const LatentModel& m) {
    ck.put_mlp("encoder", m.encoder);
    ck.put_mlp("decoder", m.decoder);
    m.targets.save(ck, "decoder_targets");
}

inline void load_latent(const Checkpoint& ck, LatentModel& m) {
    ck.load_mlp("encoder", m.encoder);
    ck.load_mlp("decoder", m.decoder);
    m.targets.load(ck, "decoder_targets");
}

}  // namespace lili
