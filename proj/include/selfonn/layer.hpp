#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/ops.hpp"
#include "selfonn/tensor.hpp"

namespace selfonn {

/// Non-owning view of one generative layer: kernels [Q,Cout,Cin,Kh,Kw] and
/// per-order biases [Q,Cout].
struct SelfOnnLayerView {
    int q_order = 1;
    ConstTensorView kernels;
    ConstTensorView biases;

    std::size_t out_channels() const { return kernels.shape[1]; }
    std::size_t in_channels() const { return kernels.shape[2]; }
    std::size_t kernel_h() const { return kernels.shape[3]; }
    std::size_t kernel_w() const { return kernels.shape[4]; }

    Shape order_kernel_shape() const { return Shape{kernels.shape[1], kernels.shape[2], kernels.shape[3], kernels.shape[4]}; }

    /// Kernel bank for order q (1-based).
    ConstTensorView kernels_for(int q) const {
        const std::size_t n = kernels.shape.elements() / kernels.shape[0];
        return {order_kernel_shape(), kernels.data.subspan(static_cast<std::size_t>(q - 1) * n, n)};
    }
    ConstTensorView biases_for(int q) const {
        const std::size_t n = biases.shape[1];
        return {Shape{n}, biases.data.subspan(static_cast<std::size_t>(q - 1) * n, n)};
    }

    void validate() const {
        if (q_order < 1) throw InputError("q_order must be >= 1");
        if (kernels.shape.rank() != 5 || biases.shape.rank() != 2)
            throw DimensionError("generative layer expects kernels of rank 5 and biases of rank 2, got " +
                                 kernels.shape.to_string() + " / " + biases.shape.to_string());
        if (kernels.shape[0] != static_cast<std::size_t>(q_order) || biases.shape[0] != static_cast<std::size_t>(q_order) ||
            biases.shape[1] != kernels.shape[1])
            throw DimensionError("generative layer with Q=" + std::to_string(q_order) + " has kernels " +
                                 kernels.shape.to_string() + " and biases " + biases.shape.to_string());
    }
};

/// Owning parameters of one generative layer.
struct SelfOnnLayerParams {
    int q_order = 1;
    Tensor kernels; // [Q, Cout, Cin, Kh, Kw]
    Tensor biases;  // [Q, Cout]

    SelfOnnLayerParams() = default;
    SelfOnnLayerParams(int q, std::size_t cout, std::size_t cin, std::size_t kh, std::size_t kw)
        : q_order(q),
          kernels(Shape{static_cast<std::size_t>(q), cout, cin, kh, kw}),
          biases(Shape{static_cast<std::size_t>(q), cout}) {
        view().validate();
    }
    SelfOnnLayerParams(int q, Tensor k, Tensor b) : q_order(q), kernels(std::move(k)), biases(std::move(b)) {
        view().validate();
    }

    std::size_t parameter_count() const { return kernels.size() + biases.size(); }

    SelfOnnLayerView view() const { return {q_order, kernels.view(), biases.view()}; }
    operator SelfOnnLayerView() const { return view(); }
};

/// What backward needs from forward: the input powers y^1..y^Q.
struct SelfOnnCache {
    std::vector<Tensor> powers;
};

struct SelfOnnGrads {
    Tensor grad_kernels; // [Q, Cout, Cin, Kh, Kw]
    Tensor grad_biases;  // [Q, Cout]
    Tensor grad_input;   // [Cin, H, W]; empty when not requested
};

namespace detail {

inline void fill_powers(ConstTensorView input, int q_order, std::vector<Tensor>& powers) {
    powers.clear();
    powers.reserve(static_cast<std::size_t>(q_order));
    powers.emplace_back(input);
    for (int q = 2; q <= q_order; ++q) {
        Tensor next(powers.back());
        for (std::size_t i = 0; i < next.size(); ++i) next[i] *= input.data[i];
        powers.push_back(std::move(next));
    }
}

inline Tensor selfonn_sum(const SelfOnnLayerView& layer, const std::vector<Tensor>& powers) {
    Tensor out = conv2d_valid(powers[0], layer.kernels_for(1), layer.biases_for(1));
    for (int q = 2; q <= layer.q_order; ++q) {
        const Tensor term = conv2d_valid(powers[static_cast<std::size_t>(q - 1)], layer.kernels_for(q), layer.biases_for(q));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += term[i];
    }
    return out;
}

} // namespace detail

/// Generative-neuron layer output: sum over q of conv2d_valid(input^q, W_q, b_q).
inline Tensor selfonn_forward(const SelfOnnLayerView& layer, ConstTensorView input) {
    layer.validate();
    if (input.shape.rank() != 3 || input.shape[0] != layer.in_channels())
        throw DimensionError("selfonn_forward: input " + input.shape.to_string() + " vs kernels " +
                             layer.kernels.shape.to_string());
    std::vector<Tensor> powers;
    detail::fill_powers(input, layer.q_order, powers);
    return detail::selfonn_sum(layer, powers);
}

/// Same as above, recording the powers for selfonn_backward.
inline Tensor selfonn_forward(const SelfOnnLayerView& layer, ConstTensorView input, SelfOnnCache& cache) {
    layer.validate();
    if (input.shape.rank() != 3 || input.shape[0] != layer.in_channels())
        throw DimensionError("selfonn_forward: input " + input.shape.to_string() + " vs kernels " +
                             layer.kernels.shape.to_string());
    detail::fill_powers(input, layer.q_order, cache.powers);
    return detail::selfonn_sum(layer, cache.powers);
}

/// Backward pass. grad_input = sum_q q * y^(q-1) (.) conv2d_backward_input(W_q, grad_out).
inline SelfOnnGrads selfonn_backward(const SelfOnnLayerView& layer, const SelfOnnCache& cache, ConstTensorView grad_out,
                                     bool want_input_grad = true) {
    layer.validate();
    if (cache.powers.size() != static_cast<std::size_t>(layer.q_order))
        throw ConsistencyError("selfonn_backward: cache holds " + std::to_string(cache.powers.size()) +
                               " powers for a Q=" + std::to_string(layer.q_order) + " layer");
    const Shape& in_shape = cache.powers[0].shape();
    if (in_shape.rank() != 3 || in_shape[0] != layer.in_channels() || grad_out.shape.rank() != 3 ||
        grad_out.shape[0] != layer.out_channels() || grad_out.shape[1] + layer.kernel_h() - 1 != in_shape[1] ||
        grad_out.shape[2] + layer.kernel_w() - 1 != in_shape[2])
        throw ConsistencyError("selfonn_backward: cached input " + in_shape.to_string() + " and grad " +
                               grad_out.shape.to_string() + " do not match layer kernels " +
                               layer.kernels.shape.to_string());

    const auto d = detail::conv_dims(in_shape, layer.order_kernel_shape());
    SelfOnnGrads g{Tensor(layer.kernels.shape), Tensor(layer.biases.shape), Tensor()};
    const std::size_t kn = layer.kernels.shape.elements() / layer.kernels.shape[0];
    const std::size_t cout = layer.out_channels();
    const std::size_t plane = d.oh * d.ow;

    for (int q = 1; q <= layer.q_order; ++q) {
        const auto qi = static_cast<std::size_t>(q - 1);
        detail::conv2d_backward_weights_into(cache.powers[qi].data(), grad_out.data, d,
                                             g.grad_kernels.data().subspan(qi * kn, kn));
    }
    for (std::size_t o = 0; o < cout; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += grad_out.data[o * plane + i];
        for (int q = 1; q <= layer.q_order; ++q) g.grad_biases[static_cast<std::size_t>(q - 1) * cout + o] = s;
    }

    if (want_input_grad) {
        g.grad_input = conv2d_backward_input(layer.kernels_for(1), grad_out);
        if (layer.q_order > 1) {
            Tensor term(in_shape);
            for (int q = 2; q <= layer.q_order; ++q) {
                detail::conv2d_backward_input_into(layer.kernels_for(q).data, grad_out.data, d, term.data());
                const Tensor& lower = cache.powers[static_cast<std::size_t>(q - 2)];
                const double qd = static_cast<double>(q);
                for (std::size_t i = 0; i < term.size(); ++i) g.grad_input[i] += qd * lower[i] * term[i];
            }
        }
    }
    return g;
}

} // namespace selfonn
