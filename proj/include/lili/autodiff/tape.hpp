#pragma once

// Reverse-mode automatic differentiation over row-major matrices.
//
// A Tape records every primitive op in creation order, so parents always
// precede children and a single reverse sweep visits each node once. Tapes are
// cheap and meant to be rebuilt for every training step.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lili/autodiff/tensor.hpp"

namespace lili::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] std::size_t rows() const;
    [[nodiscard]] std::size_t cols() const;
    [[nodiscard]] std::span<const double> value() const;
    [[nodiscard]] double item() const;
    [[nodiscard]] bool requires_grad() const;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

// Products run on Eigen-owned (aligned) copies: vectorised kernels then take
// the same code path whatever the address of the caller's buffer, which keeps
// results bit-reproducible.
inline RowMat dense(std::span<const double> v, std::size_t rows, std::size_t cols) {
    return CMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> own;
    const std::vector<double>* ref = nullptr;  // borrowed parameter storage
    std::vector<double> grad;
    Tensor* param = nullptr;  // gradient sink for trainable leaves
    bool requires_grad = false;
    std::function<void(Tape&)> backward;

    [[nodiscard]] const std::vector<double>& values() const { return ref ? *ref : own; }
};

}  // namespace detail

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf holding data that never receives a gradient.
    Var constant(const Tensor& t) { return constant(t.rows(), t.cols(), t.data()); }
    Var constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
        if (values.size() != rows * cols) throw ConfigError("constant payload does not match its shape");
        auto& n = push(rows, cols);
        n.own = std::move(values);
        return last();
    }
    Var scalar(double v) { return constant(1, 1, {v}); }

    /// Trainable leaf; backward() accumulates into `p.grad`.
    Var param(Tensor& p) {
        auto& n = push(p.rows(), p.cols());
        n.ref = &p.data();
        n.param = &p;
        n.requires_grad = true;
        return last();
    }

    /// Parameter used as a constant (no gradient sink, no copy).
    Var frozen(const Tensor& p) {
        auto& n = push(p.rows(), p.cols());
        n.ref = &p.data();
        return last();
    }

    /// Records an op result. `backward` runs only if some input requires grad.
    Var record(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad,
               std::function<void(Tape&)> backward) {
        auto& n = push(rows, cols);
        n.own = std::move(values);
        n.requires_grad = requires_grad;
        if (requires_grad) n.backward = std::move(backward);
        return last();
    }

    [[nodiscard]] detail::Node& node(Var v) { return nodes_[v.id]; }
    [[nodiscard]] const detail::Node& node(Var v) const { return nodes_[v.id]; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    /// Mutable gradient buffer of `v`, zero-initialised on first access.
    std::vector<double>& grad_of(Var v) {
        auto& n = nodes_[v.id];
        if (n.grad.empty()) n.grad.assign(n.rows * n.cols, 0.0);
        return n.grad;
    }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
    ///
    /// Every trainable leaf bound on this tape ends up with a populated
    /// gradient, exactly zero when no path connects it to the loss.
    void backward(Var loss) {
        if (loss.tape != this) throw UsageError("loss was not produced on this tape");
        auto& ln = nodes_[loss.id];
        if (ln.rows * ln.cols != 1) throw UsageError("backward requires a scalar loss");
        grad_of(loss)[0] += 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.requires_grad || n.grad.empty()) continue;
            if (n.backward) n.backward(*this);
        }
        for (auto& n : nodes_) {
            if (!n.param) continue;
            if (n.grad.empty())
                n.param->ensure_grad();
            else
                n.param->accumulate_grad(n.grad);
        }
    }

private:
    detail::Node& push(std::size_t rows, std::size_t cols) {
        nodes_.emplace_back();
        auto& n = nodes_.back();
        n.rows = rows;
        n.cols = cols;
        return n;
    }
    Var last() { return Var{this, nodes_.size() - 1}; }

    std::deque<detail::Node> nodes_;
};

inline std::size_t Var::rows() const { return tape->node(*this).rows; }
inline std::size_t Var::cols() const { return tape->node(*this).cols; }
inline std::span<const double> Var::value() const { return tape->node(*this).values(); }
inline double Var::item() const { return tape->node(*this).values().at(0); }
inline bool Var::requires_grad() const { return tape->node(*this).requires_grad; }

namespace detail {

inline void same_shape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw UsageError(std::string(op) + ": operands live on different tapes");
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ConfigError(std::string(op) + ": shape mismatch");
}

inline bool is_scalar(Var v) { return v.rows() == 1 && v.cols() == 1; }

// Unary elementwise op; `dfdx(x, y)` gives the local derivative.
template <class F, class D>
Var unary(Var x, F f, D dfdx) {
    Tape& t = *x.tape;
    const auto& xv = x.value();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const std::size_t self = t.size();
    return t.record(x.rows(), x.cols(), std::move(out), x.requires_grad(), [x, self, dfdx](Tape& tp) {
        const auto& g = tp.node(Var{&tp, self}).grad;
        const auto& xv2 = tp.node(x).values();
        const auto& yv = tp.node(Var{&tp, self}).values();
        auto& gx = tp.grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv2[i], yv[i]);
    });
}

}  // namespace detail

/// y = x W + b, with x: B x in, W: in x out, b: 1 x out.
inline Var linear(Var x, Var w, Var b) {
    if (x.cols() != w.rows())
        throw ConfigError("linear: input width " + std::to_string(x.cols()) + " does not match weight rows " +
                          std::to_string(w.rows()));
    if (b.rows() * b.cols() != w.cols()) throw ConfigError("linear: bias width does not match weight columns");
    Tape& t = *x.tape;
    const auto B = x.rows(), in = x.cols(), out = w.cols();
    std::vector<double> y(B * out);
    {
        const detail::RowMat prod = detail::dense(x.value(), B, in) * detail::dense(w.value(), in, out);
        const auto& bias = b.value();
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < out; ++c) y[r * out + c] = prod(r, c) + bias[c];
    }
    const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
    const std::size_t self = t.size();
    return t.record(B, out, std::move(y), rg, [=](Tape& tp) {
        const auto& g = tp.node(Var{&tp, self}).grad;
        const detail::RowMat G = detail::dense(g, B, out);
        if (x.requires_grad()) {
            const detail::RowMat gx = G * detail::dense(tp.node(w).values(), in, out).transpose();
            detail::Map(tp.grad_of(x).data(), B, in) += gx;
        }
        if (w.requires_grad()) {
            const detail::RowMat gw = detail::dense(tp.node(x).values(), B, in).transpose() * G;
            detail::Map(tp.grad_of(w).data(), in, out) += gw;
        }
        if (b.requires_grad()) {
            auto& gb = tp.grad_of(b);
            for (std::size_t r = 0; r < B; ++r)
                for (std::size_t c = 0; c < out; ++c) gb[c] += g[r * out + c];
        }
    });
}

inline Var relu(Var x) {
    return detail::unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(Var x) {
    return detail::unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(Var x) {
    return detail::unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var square(Var x) {
    return detail::unary(
        x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Var scale(Var x, double k) {
    return detail::unary(
        x, [k](double v) { return k * v; }, [k](double, double) { return k; });
}

inline Var add_scalar(Var x, double k) {
    return detail::unary(
        x, [k](double v) { return v + k; }, [](double, double) { return 1.0; });
}

/// Clamp with zero gradient outside [lo, hi].
inline Var clamp(Var x, double lo, double hi) {
    return detail::unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

/// Bound on |tanh(u)| so squashed actions stay strictly inside (-1, 1).
inline constexpr double kSquashLimit = 1.0 - 1e-9;

/// a = tanh(u), clipped to (-1, 1); derivative 1 - tanh(u)^2.
inline Var squash(Var u) {
    return detail::unary(
        u, [](double v) { return std::clamp(std::tanh(v), -kSquashLimit, kSquashLimit); },
        [](double v, double) {
            const double th = std::tanh(v);
            return 1.0 - th * th;
        });
}

/// log(1 - tanh(u)^2) evaluated as 2 (log 2 - u - softplus(-2u)).
inline Var squash_log_det(Var u) {
    auto f = [](double v) {
        const double m = -2.0 * v;
        const double softplus = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
        return 2.0 * (std::numbers::ln2 - v - softplus);
    };
    return detail::unary(u, f, [](double v, double) { return -2.0 * std::tanh(v); });
}

// Binary elementwise ops. A 1x1 operand broadcasts against the other.
namespace detail {

template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* name, F f, DA dfa, DB dfb) {
    if (a.tape != b.tape) throw UsageError(std::string(name) + ": operands live on different tapes");
    const bool sa = is_scalar(a) && !is_scalar(b);
    const bool sb = is_scalar(b) && !is_scalar(a);
    if (!sa && !sb) same_shape(a, b, name);
    const Var shape_src = sa ? b : a;
    const std::size_t n = shape_src.rows() * shape_src.cols();
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
    Tape& t = *a.tape;
    const std::size_t self = t.size();
    return t.record(shape_src.rows(), shape_src.cols(), std::move(out), a.requires_grad() || b.requires_grad(),
                    [=](Tape& tp) {
                        const auto& g = tp.node(Var{&tp, self}).grad;
                        const auto& av2 = tp.node(a).values();
                        const auto& bv2 = tp.node(b).values();
                        if (a.requires_grad()) {
                            auto& ga = tp.grad_of(a);
                            for (std::size_t i = 0; i < n; ++i)
                                ga[sa ? 0 : i] += g[i] * dfa(av2[sa ? 0 : i], bv2[sb ? 0 : i]);
                        }
                        if (b.requires_grad()) {
                            auto& gb = tp.grad_of(b);
                            for (std::size_t i = 0; i < n; ++i)
                                gb[sb ? 0 : i] += g[i] * dfb(av2[sa ? 0 : i], bv2[sb ? 0 : i]);
                        }
                    });
}

}  // namespace detail

inline Var add(Var a, Var b) {
    return detail::binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
    return detail::binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
    return detail::binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

/// Elementwise minimum; ties route the gradient to the first operand.
inline Var minimum(Var a, Var b) {
    return detail::binary(
        a, b, "minimum", [](double x, double y) { return std::min(x, y); },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// Sum of every entry, as a 1x1 node.
inline Var sum(Var x) {
    Tape& t = *x.tape;
    double s = 0.0;
    for (double v : x.value()) s += v;
    const std::size_t self = t.size();
    const std::size_t n = x.rows() * x.cols();
    return t.record(1, 1, {s}, x.requires_grad(), [=](Tape& tp) {
        const double g = tp.node(Var{&tp, self}).grad[0];
        auto& gx = tp.grad_of(x);
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
}

inline Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.rows() * x.cols())); }

/// Row sums: B x k -> B x 1.
inline Var sum_cols(Var x) {
    Tape& t = *x.tape;
    const auto R = x.rows(), C = x.cols();
    const auto& xv = x.value();
    std::vector<double> out(R, 0.0);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[r] += xv[r * C + c];
    const std::size_t self = t.size();
    return t.record(R, 1, std::move(out), x.requires_grad(), [=](Tape& tp) {
        const auto& g = tp.node(Var{&tp, self}).grad;
        auto& gx = tp.grad_of(x);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[r];
    });
}

/// Horizontal concatenation of equal-height blocks.
inline Var concat_cols(std::initializer_list<Var> parts) {
    std::vector<Var> ps(parts);
    if (ps.empty()) throw UsageError("concat_cols: nothing to concatenate");
    Tape& t = *ps.front().tape;
    const auto R = ps.front().rows();
    std::size_t C = 0;
    bool rg = false;
    for (auto p : ps) {
        if (p.rows() != R) throw ConfigError("concat_cols: row counts differ");
        C += p.cols();
        rg = rg || p.requires_grad();
    }
    std::vector<double> out(R * C);
    std::size_t off = 0;
    for (auto p : ps) {
        const auto pc = p.cols();
        const auto& pv = p.value();
        for (std::size_t r = 0; r < R; ++r) std::copy_n(pv.begin() + r * pc, pc, out.begin() + r * C + off);
        off += pc;
    }
    const std::size_t self = t.size();
    return t.record(R, C, std::move(out), rg, [=](Tape& tp) {
        const auto& g = tp.node(Var{&tp, self}).grad;
        std::size_t o = 0;
        for (auto p : ps) {
            const auto pc = p.cols();
            if (p.requires_grad()) {
                auto& gp = tp.grad_of(p);
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < pc; ++c) gp[r * pc + c] += g[r * C + o + c];
            }
            o += pc;
        }
    });
}

/// Columns [begin, begin + count) of x.
inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const auto R = x.rows(), C = x.cols();
    if (begin + count > C) throw ConfigError("slice_cols: range exceeds width");
    Tape& t = *x.tape;
    const auto& xv = x.value();
    std::vector<double> out(R * count);
    for (std::size_t r = 0; r < R; ++r) std::copy_n(xv.begin() + r * C + begin, count, out.begin() + r * count);
    const std::size_t self = t.size();
    return t.record(R, count, std::move(out), x.requires_grad(), [=](Tape& tp) {
        const auto& g = tp.node(Var{&tp, self}).grad;
        auto& gx = tp.grad_of(x);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < count; ++c) gx[r * C + begin + c] += g[r * count + c];
    });
}

/// Mean over contiguous row segments: segment g spans rows [offsets[g], offsets[g+1]).
inline Var segment_mean(Var x, std::vector<std::size_t> offsets) {
    const auto R = x.rows(), C = x.cols();
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != R)
        throw ConfigError("segment_mean: offsets must start at 0 and end at the row count");
    for (std::size_t g = 0; g + 1 < offsets.size(); ++g)
        if (offsets[g + 1] <= offsets[g]) throw ConfigError("segment_mean: empty segment");
    const auto G = offsets.size() - 1;
    Tape& t = *x.tape;
    const auto& xv = x.value();
    std::vector<double> out(G * C, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
        const double inv = 1.0 / static_cast<double>(offsets[g + 1] - offsets[g]);
        for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r)
            for (std::size_t c = 0; c < C; ++c) out[g * C + c] += xv[r * C + c] * inv;
    }
    const std::size_t self = t.size();
    return t.record(G, C, std::move(out), x.requires_grad(), [=, offsets = std::move(offsets)](Tape& tp) {
        const auto& g = tp.node(Var{&tp, self}).grad;
        auto& gx = tp.grad_of(x);
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
            const double inv = 1.0 / static_cast<double>(offsets[s + 1] - offsets[s]);
            for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
                for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[s * C + c] * inv;
        }
    });
}

/// Mean over consecutive groups of `group` rows: (G*group) x k -> G x k.
inline Var group_mean(Var x, std::size_t group) {
    if (group == 0 || x.rows() % group != 0) throw ConfigError("group_mean: rows not divisible by group size");
    std::vector<std::size_t> offsets;
    for (std::size_t r = 0; r <= x.rows(); r += group) offsets.push_back(r);
    return segment_mean(x, std::move(offsets));
}

/// Row gather: out[i] = x[index[i]]; backward scatters-adds.
inline Var gather_rows(Var x, std::vector<std::size_t> index) {
    const auto R = x.rows(), C = x.cols();
    for (auto i : index)
        if (i >= R) throw ConfigError("gather_rows: index out of range");
    Tape& t = *x.tape;
    const auto& xv = x.value();
    std::vector<double> out(index.size() * C);
    for (std::size_t i = 0; i < index.size(); ++i) std::copy_n(xv.begin() + index[i] * C, C, out.begin() + i * C);
    const std::size_t self = t.size();
    const auto n = index.size();
    return t.record(n, C, std::move(out), x.requires_grad(), [=, index = std::move(index)](Tape& tp) {
        const auto& g = tp.node(Var{&tp, self}).grad;
        auto& gx = tp.grad_of(x);
        for (std::size_t i = 0; i < index.size(); ++i)
            for (std::size_t c = 0; c < C; ++c) gx[index[i] * C + c] += g[i * C + c];
    });
}

/// Copy of x's values with the gradient path cut.
inline Var detach(Var x) {
    const auto& xv = x.value();
    return x.tape->constant(x.rows(), x.cols(), std::vector<double>(xv.begin(), xv.end()));
}

/// Extracts the values of `x` as a Tensor of shape rows x cols.
inline Tensor to_tensor(Var x) {
    const auto& xv = x.value();
    return Tensor(Shape{x.rows(), x.cols()}, std::vector<double>(xv.begin(), xv.end()));
}

}  // namespace lili::ad
