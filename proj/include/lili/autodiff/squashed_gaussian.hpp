#pragma once

#include <numbers>

#include "lili/autodiff/tape.hpp"

namespace lili {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct SquashedSample {
    ad::Var action;    // B x d, strictly inside (-1, 1)
    ad::Var log_prob;  // B x 1
};

/// Reparameterised tanh-Gaussian draw.
///
/// u = mean + exp(log_std) * noise, action = tanh(u), and
/// log pi(a) = sum_d [N(u; mean, std)] - sum_d log(1 - tanh(u)^2).
inline SquashedSample squashed_gaussian_sample(ad::Var mean, ad::Var log_std, ad::Var noise) {
    if (mean.rows() != log_std.rows() || mean.cols() != log_std.cols() || mean.rows() != noise.rows() ||
        mean.cols() != noise.cols())
        throw ConfigError("squashed_gaussian_sample: mean, log_std and noise shapes differ");
    ad::Var ls = ad::clamp(log_std, kLogStdMin, kLogStdMax);
    ad::Var u = ad::add(mean, ad::mul(ad::exp(ls), noise));
    ad::Var action = ad::squash(u);

    // Gaussian density of u: the standardised residual is exactly `noise`.
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    ad::Var gauss = ad::add_scalar(ad::sub(ad::scale(ad::square(noise), -0.5), ls), -half_log_2pi);
    ad::Var log_prob = ad::sub(ad::sum_cols(gauss), ad::sum_cols(ad::squash_log_det(u)));
    return {action, log_prob};
}

/// Deterministic action tanh(mean).
inline ad::Var squashed_mean(ad::Var mean) { return ad::squash(mean); }

}  // namespace lili
