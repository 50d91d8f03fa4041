#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lili/autodiff/tape.hpp"
#include "lili/autodiff/tensor.hpp"

namespace lili {

enum class Activation { relu, tanh };

struct DenseLayer {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
};

/// Named column range of the final layer's output.
struct OutputHead {
    std::string name;
    std::size_t width = 0;
};

/// Fully connected network: hidden layers use `activation`, the last layer is linear.
struct MlpParams {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::relu;
    std::vector<OutputHead> heads;

    [[nodiscard]] std::size_t input_dim() const { return layers.front().weight.rows(); }
    [[nodiscard]] std::size_t output_dim() const { return layers.back().weight.cols(); }

    /// Flat list of parameter tensors in layer order (weight, bias, weight, ...).
    [[nodiscard]] std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
        return out;
    }
    [[nodiscard]] std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (const auto& l : layers) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
        return out;
    }

    [[nodiscard]] std::pair<std::size_t, std::size_t> head_range(const std::string& name) const {
        std::size_t off = 0;
        for (const auto& h : heads) {
            if (h.name == name) return {off, h.width};
            off += h.width;
        }
        throw ConfigError("unknown output head '" + name + "'");
    }

    [[nodiscard]] bool all_finite() const {
        for (const auto* t : tensors())
            if (!t->all_finite()) return false;
        return true;
    }
};

/// Builds a network with the given layer widths, `widths.front()` being the input.
///
/// Hidden weights use He-uniform initialisation; the output layer is scaled
/// down so fresh networks emit values near zero.
template <class Rng>
MlpParams make_mlp(const std::vector<std::size_t>& widths, Activation act, std::vector<OutputHead> heads, Rng& rng) {
    if (widths.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
    std::size_t head_total = 0;
    for (const auto& h : heads) head_total += h.width;
    if (heads.empty()) heads.push_back({"out", widths.back()});
    else if (head_total != widths.back()) throw ConfigError("output heads do not cover the final layer");

    MlpParams p;
    p.activation = act;
    p.heads = std::move(heads);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const auto in = widths[i], out = widths[i + 1];
        const bool last = i + 2 == widths.size();
        const double bound = (last ? 1e-1 : 1.0) * std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        DenseLayer layer{Tensor::matrix(in, out), Tensor(Shape{1, out})};
        for (auto& w : layer.weight.data()) w = u(rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

enum class Binding { trainable, frozen };

namespace detail {

template <class Bind>
ad::Var run_mlp(const MlpParams& params, ad::Var input, Bind bind) {
    if (params.layers.empty()) throw ConfigError("mlp_forward: empty network");
    if (input.cols() != params.input_dim())
        throw ConfigError("mlp_forward: input width " + std::to_string(input.cols()) + " but network expects " +
                          std::to_string(params.input_dim()));
    ad::Var h = input;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        h = ad::linear(h, bind(i, true), bind(i, false));
        if (i + 1 < params.layers.size())
            h = params.activation == Activation::relu ? ad::relu(h) : ad::tanh(h);
    }
    return h;
}

}  // namespace detail

/// Evaluates the network on `input` (B x in), recording on input's tape.
/// Trainable binding routes gradients into the parameter tensors.
inline ad::Var mlp_forward(MlpParams& params, ad::Var input, Binding binding) {
    ad::Tape& tape = *input.tape;
    return detail::run_mlp(params, input, [&](std::size_t i, bool weight) {
        Tensor& t = weight ? params.layers[i].weight : params.layers[i].bias;
        return binding == Binding::trainable ? tape.param(t) : tape.frozen(t);
    });
}

/// Evaluation with parameters held constant.
inline ad::Var mlp_forward(const MlpParams& params, ad::Var input) {
    ad::Tape& tape = *input.tape;
    return detail::run_mlp(params, input, [&](std::size_t i, bool weight) {
        return tape.frozen(weight ? params.layers[i].weight : params.layers[i].bias);
    });
}

inline ad::Var mlp_head(const MlpParams& params, ad::Var output, const std::string& name) {
    const auto [off, width] = params.head_range(name);
    return ad::slice_cols(output, off, width);
}

}  // namespace lili
