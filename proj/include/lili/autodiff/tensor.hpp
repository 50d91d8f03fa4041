#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lili {

/// Raised when shapes or configuration values do not line up.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when an API is called out of order or with an argument it cannot accept.
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A tensor of rank 1 is treated as a single row when used as a matrix.
/// `grad` is empty until a backward pass writes into it.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != shape_size(shape_)) {
            throw ConfigError("tensor payload of " + std::to_string(values_.size()) +
                              " values does not match shape " + shape_string(shape_));
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor(Shape{rows, cols}, fill);
    }

    static Tensor scalar(double v) { return Tensor(Shape{1, 1}, std::vector<double>{v}); }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    [[nodiscard]] std::size_t rows() const noexcept {
        if (shape_.empty()) return 1;
        return shape_.size() == 1 ? 1 : shape_[0];
    }
    [[nodiscard]] std::size_t cols() const noexcept {
        if (shape_.empty()) return 1;
        return shape_.back();
    }

    [[nodiscard]] std::span<double> values() noexcept { return values_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::vector<double>& data() noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& data() const noexcept { return values_; }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& at(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

    [[nodiscard]] bool has_grad() const noexcept { return !grad_.empty(); }
    [[nodiscard]] std::span<double> grad() noexcept { return grad_; }
    [[nodiscard]] std::span<const double> grad() const noexcept { return grad_; }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    void accumulate_grad(std::span<const double> g) {
        if (g.size() != values_.size()) throw UsageError("gradient length does not match tensor");
        if (grad_.empty()) grad_.assign(values_.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
    }
    void ensure_grad() {
        if (grad_.empty()) grad_.assign(values_.size(), 0.0);
    }
    void clear_grad() noexcept { grad_.clear(); }

    [[nodiscard]] bool all_finite() const noexcept {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        for (double v : grad_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && values_ == other.values_; }

private:
    Shape shape_;
    std::vector<double> values_;
    std::vector<double> grad_;
};

}  // namespace lili
