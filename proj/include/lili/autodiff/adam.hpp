#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lili/autodiff/tensor.hpp"

namespace lili {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment accumulators for one parameter group.
struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(AdamConfig cfg, const std::vector<Tensor*>& params) : config(cfg) {
        for (const auto* p : params) {
            first_moment.emplace_back(p->shape());
            second_moment.emplace_back(p->shape());
        }
    }

    /// Bias-corrected second moment of parameter `k`, entry `i`.
    [[nodiscard]] double corrected_second_moment(std::size_t k, std::size_t i) const {
        return second_moment[k][i] / (1.0 - std::pow(config.beta2, static_cast<double>(step)));
    }
};

/// Applies one Adam update to `params` using their gradients, then clears them.
inline void adam_step(const std::vector<Tensor*>& params, AdamState& state) {
    if (params.size() != state.first_moment.size())
        throw UsageError("adam_step: parameter group does not match optimizer state");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->has_grad()) throw UsageError("adam_step: parameter " + std::to_string(k) + " has no gradient");
        if (params[k]->shape() != state.first_moment[k].shape())
            throw UsageError("adam_step: parameter shape changed under the optimizer");
    }
    ++state.step;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto g = p.grad();
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
        p.clear_grad();
    }
}

}  // namespace lili
