#pragma once

// Central finite-difference oracle for analytic gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lili/autodiff/tensor.hpp"

namespace lili::testing {

struct GradCheckResult {
    std::size_t checked = 0;
    std::size_t passed = 0;
    double worst = 0.0;  // largest relative error seen

    [[nodiscard]] double pass_fraction() const { return checked ? static_cast<double>(passed) / checked : 1.0; }
};

inline double relative_error(double a, double n) {
    const double diff = std::abs(a - n);
    const double scale = std::max(std::abs(a), std::abs(n));
    if (diff < 1e-9) return 0.0;  // both effectively zero
    return diff / scale;
}

/// `run` evaluates the loss and back-propagates into `params` (accumulating grads).
/// Up to `max_coords` coordinates are sampled across all tensors.
inline GradCheckResult check_gradients(const std::vector<Tensor*>& params, const std::function<double()>& run,
                                       double tol = 1e-4, double h = 1e-5, std::size_t max_coords = 400,
                                       std::uint64_t seed = 7) {
    for (auto* p : params) p->clear_grad();
    run();
    std::vector<std::vector<double>> analytic;
    for (auto* p : params) {
        analytic.emplace_back(p->grad().begin(), p->grad().end());
        if (analytic.back().empty()) analytic.back().assign(p->size(), 0.0);
        p->clear_grad();
    }
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k]->size(); ++i) coords.emplace_back(k, i);
    if (coords.size() > max_coords) {
        std::mt19937_64 rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(max_coords);
    }
    GradCheckResult res;
    for (auto [k, i] : coords) {
        double& x = (*params[k])[i];
        const double x0 = x;
        x = x0 + h;
        const double fp = run();
        x = x0 - h;
        const double fm = run();
        x = x0;
        for (auto* p : params) p->clear_grad();
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = relative_error(analytic[k][i], numeric);
        ++res.checked;
        if (err <= tol) ++res.passed;
        res.worst = std::max(res.worst, err);
    }
    return res;
}

}  // namespace lili::testing
