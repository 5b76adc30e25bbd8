#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/tensor.hpp"

namespace selfonn {

namespace detail {

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.rank() != rank)
        throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " + s.to_string());
}

struct ConvDims {
    std::size_t cin, h, w;
    std::size_t cout, kh, kw;
    std::size_t oh, ow;
};

inline ConvDims conv_dims(const Shape& input, const Shape& kernels) {
    require_rank(input, 3, "conv input");
    require_rank(kernels, 4, "conv kernels");
    if (input[0] != kernels[1] || input[1] < kernels[2] || input[2] < kernels[3])
        throw DimensionError("conv2d_valid: input " + input.to_string() + " incompatible with kernels " +
                             kernels.to_string());
    return {input[0], input[1], input[2], kernels[0], kernels[2], kernels[3],
            input[1] - kernels[2] + 1, input[2] - kernels[3] + 1};
}

// out[o] starts at bias[o] (or 0) and accumulates the c, r, t taps in that
// order. Loops run one output row at a time so the working set stays in cache;
// the per-element summation order is unaffected.
inline void conv2d_valid_into(std::span<const double> in, std::span<const double> k, std::span<const double> bias,
                              const ConvDims& d, std::span<double> out) {
    const std::size_t plane = d.oh * d.ow;
    for (std::size_t o = 0; o < d.cout; ++o) {
        const double b = bias.empty() ? 0.0 : bias[o];
        for (std::size_t m = 0; m < d.oh; ++m) {
            double* dst = out.data() + o * plane + m * d.ow;
            std::fill(dst, dst + d.ow, b);
            for (std::size_t c = 0; c < d.cin; ++c) {
                const double* kern = k.data() + (o * d.cin + c) * d.kh * d.kw;
                for (std::size_t r = 0; r < d.kh; ++r) {
                    const double* row = in.data() + c * d.h * d.w + (m + r) * d.w;
                    for (std::size_t t = 0; t < d.kw; ++t) {
                        const double wv = kern[r * d.kw + t];
                        const double* src = row + t;
                        for (std::size_t n = 0; n < d.ow; ++n) dst[n] += wv * src[n];
                    }
                }
            }
        }
    }
}

// Each kernel tap is one dot product accumulated in (m, n) order.
inline void conv2d_backward_weights_into(std::span<const double> in, std::span<const double> g, const ConvDims& d,
                                         std::span<double> grad_k) {
    const std::size_t taps = d.cin * d.kh * d.kw;
    for (std::size_t o = 0; o < d.cout; ++o) {
        const double* gp = g.data() + o * d.oh * d.ow;
        double* acc = grad_k.data() + o * taps;
        std::fill(acc, acc + taps, 0.0);
        for (std::size_t m = 0; m < d.oh; ++m) {
            const double* gr = gp + m * d.ow;
            for (std::size_t c = 0; c < d.cin; ++c) {
                for (std::size_t r = 0; r < d.kh; ++r) {
                    const double* row = in.data() + c * d.h * d.w + (m + r) * d.w;
                    for (std::size_t t = 0; t < d.kw; ++t) {
                        const double* src = row + t;
                        double s = acc[(c * d.kh + r) * d.kw + t];
                        for (std::size_t n = 0; n < d.ow; ++n) s += gr[n] * src[n];
                        acc[(c * d.kh + r) * d.kw + t] = s;
                    }
                }
            }
        }
    }
}

// grad_in is overwritten; contributions land in (o, r, t) order per element.
inline void conv2d_backward_input_into(std::span<const double> k, std::span<const double> g, const ConvDims& d,
                                       std::span<double> grad_in) {
    std::fill(grad_in.begin(), grad_in.end(), 0.0);
    for (std::size_t o = 0; o < d.cout; ++o) {
        const double* gp = g.data() + o * d.oh * d.ow;
        for (std::size_t c = 0; c < d.cin; ++c) {
            double* dst_plane = grad_in.data() + c * d.h * d.w;
            const double* kern = k.data() + (o * d.cin + c) * d.kh * d.kw;
            for (std::size_t y = 0; y < d.h; ++y) {
                // Output rows m = y - r that exist, taken in increasing r.
                const std::size_t r_lo = y + 1 > d.oh ? y + 1 - d.oh : 0;
                const std::size_t r_hi = std::min(d.kh - 1, y);
                for (std::size_t r = r_lo; r <= r_hi; ++r) {
                    const double* gr = gp + (y - r) * d.ow;
                    for (std::size_t t = 0; t < d.kw; ++t) {
                        const double wv = kern[r * d.kw + t];
                        double* dst = dst_plane + y * d.w + t;
                        for (std::size_t n = 0; n < d.ow; ++n) dst[n] += wv * gr[n];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// Valid (unpadded) 2D cross-correlation:
///   out[o,m,n] = bias[o] + sum_c sum_r sum_t kernels[o,c,r,t] * input[c,m+r,n+t]
inline Tensor conv2d_valid(ConstTensorView input, ConstTensorView kernels,
                           std::optional<ConstTensorView> bias = std::nullopt) {
    const auto d = detail::conv_dims(input.shape, kernels.shape);
    std::span<const double> b;
    if (bias) {
        if (bias->shape.rank() != 1 || bias->shape[0] != d.cout)
            throw DimensionError("conv2d_valid: bias " + bias->shape.to_string() + " does not match kernels " +
                                 kernels.shape.to_string());
        b = bias->data;
    }
    Tensor out(Shape{d.cout, d.oh, d.ow});
    detail::conv2d_valid_into(input.data, kernels.data, b, d, out.data());
    return out;
}

/// Gradient w.r.t. the kernels. Kernel extent is implied by the two spatial sizes.
inline Tensor conv2d_backward_weights(ConstTensorView input, ConstTensorView grad_out) {
    detail::require_rank(input.shape, 3, "conv input");
    detail::require_rank(grad_out.shape, 3, "conv grad_out");
    if (grad_out.shape[1] > input.shape[1] || grad_out.shape[2] > input.shape[2])
        throw DimensionError("conv2d_backward_weights: grad_out " + grad_out.shape.to_string() +
                             " larger than input " + input.shape.to_string());
    const std::size_t kh = input.shape[1] - grad_out.shape[1] + 1;
    const std::size_t kw = input.shape[2] - grad_out.shape[2] + 1;
    const Shape kshape{grad_out.shape[0], input.shape[0], kh, kw};
    const auto d = detail::conv_dims(input.shape, kshape);
    Tensor gk(kshape);
    detail::conv2d_backward_weights_into(input.data, grad_out.data, d, gk.data());
    return gk;
}

inline Tensor conv2d_backward_input(ConstTensorView kernels, ConstTensorView grad_out) {
    detail::require_rank(kernels.shape, 4, "conv kernels");
    detail::require_rank(grad_out.shape, 3, "conv grad_out");
    if (kernels.shape[0] != grad_out.shape[0])
        throw DimensionError("conv2d_backward_input: kernels " + kernels.shape.to_string() + " vs grad_out " +
                             grad_out.shape.to_string());
    const Shape in_shape{kernels.shape[1], grad_out.shape[1] + kernels.shape[2] - 1,
                         grad_out.shape[2] + kernels.shape[3] - 1};
    const auto d = detail::conv_dims(in_shape, kernels.shape);
    Tensor gi(in_shape);
    detail::conv2d_backward_input_into(kernels.data, grad_out.data, d, gi.data());
    return gi;
}

/// t^q by repeated multiplication, left to right.
inline Tensor elementwise_pow(ConstTensorView t, int q) {
    if (q < 1) throw InputError("elementwise_pow: q must be >= 1, got " + std::to_string(q));
    Tensor out(t);
    for (int i = 2; i <= q; ++i)
        for (std::size_t j = 0; j < out.size(); ++j) out[j] *= t.data[j];
    return out;
}

inline Tensor tanh_forward(ConstTensorView t) {
    Tensor out(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::tanh(t.data[i]);
    return out;
}

inline Tensor tanh_backward(ConstTensorView activated, ConstTensorView grad_out) {
    if (!(activated.shape == grad_out.shape))
        throw DimensionError("tanh_backward: " + activated.shape.to_string() + " vs " + grad_out.shape.to_string());
    Tensor out(activated.shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = grad_out.data[i] * (1.0 - activated.data[i] * activated.data[i]);
    return out;
}

/// Argmax bookkeeping for one max-pool call.
struct PoolIndices {
    Shape input_shape;
    Shape output_shape;
    std::vector<std::size_t> argmax; // flat input index, one per output cell
};

struct PoolResult {
    Tensor output;
    PoolIndices indices;
};

/// 2x2 / stride-2 max pooling. Trailing odd rows and columns are dropped; ties
/// go to the smallest flat index.
inline PoolResult maxpool2x2(ConstTensorView input) {
    detail::require_rank(input.shape, 3, "maxpool input");
    const std::size_t c = input.shape[0], h = input.shape[1], w = input.shape[2];
    if (h < 2 || w < 2) throw DimensionError("maxpool2x2: spatial dims must be >= 2, got " + input.shape.to_string());
    const std::size_t oh = h / 2, ow = w / 2;
    PoolResult r{Tensor(Shape{c, oh, ow}), PoolIndices{input.shape, Shape{c, oh, ow}, {}}};
    r.indices.argmax.resize(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                const std::size_t base = (ch * h + 2 * i) * w + 2 * j;
                const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
                std::size_t best = cand[0];
                for (std::size_t k = 1; k < 4; ++k)
                    if (input.data[cand[k]] > input.data[best]) best = cand[k];
                const std::size_t out_idx = (ch * oh + i) * ow + j;
                r.output[out_idx] = input.data[best];
                r.indices.argmax[out_idx] = best;
            }
        }
    }
    return r;
}

inline Tensor maxpool2x2_backward(ConstTensorView grad_out, const PoolIndices& indices, const Shape& input_shape) {
    if (!(grad_out.shape == indices.output_shape) || !(input_shape == indices.input_shape) ||
        indices.argmax.size() != grad_out.size())
        throw ConsistencyError("maxpool2x2_backward: grad " + grad_out.shape.to_string() + " / input " +
                               input_shape.to_string() + " do not match recorded pool indices");
    const std::size_t h = input_shape[1], w = input_shape[2];
    const std::size_t oh = indices.output_shape[1], ow = indices.output_shape[2];
    Tensor gi(input_shape);
    for (std::size_t out_idx = 0; out_idx < indices.argmax.size(); ++out_idx) {
        const std::size_t src = indices.argmax[out_idx];
        const std::size_t ch = out_idx / (oh * ow);
        const std::size_t i = (out_idx / ow) % oh;
        const std::size_t j = out_idx % ow;
        const std::size_t row = (src / w) % h, col = src % w, sch = src / (h * w);
        if (sch != ch || row / 2 != i || col / 2 != j)
            throw ConsistencyError("maxpool2x2_backward: index " + std::to_string(src) + " outside its window");
        gi[src] += grad_out.data[out_idx];
    }
    return gi;
}

inline Tensor dense_forward(ConstTensorView x, ConstTensorView weights, ConstTensorView bias) {
    detail::require_rank(weights.shape, 2, "dense weights");
    const std::size_t units = weights.shape[0], d = weights.shape[1];
    if (x.size() != d || bias.size() != units)
        throw DimensionError("dense_forward: x " + x.shape.to_string() + ", weights " + weights.shape.to_string() +
                             ", bias " + bias.shape.to_string());
    Tensor out(Shape{units});
    for (std::size_t u = 0; u < units; ++u) {
        double s = bias.data[u];
        const double* row = weights.data.data() + u * d;
        for (std::size_t k = 0; k < d; ++k) s += row[k] * x.data[k];
        out[u] = s;
    }
    return out;
}

struct DenseGrads {
    Tensor grad_x;
    Tensor grad_weights;
    Tensor grad_bias;
};

inline DenseGrads dense_backward(ConstTensorView x, ConstTensorView weights, ConstTensorView grad_out) {
    detail::require_rank(weights.shape, 2, "dense weights");
    const std::size_t units = weights.shape[0], d = weights.shape[1];
    if (x.size() != d || grad_out.size() != units)
        throw DimensionError("dense_backward: x " + x.shape.to_string() + ", weights " + weights.shape.to_string() +
                             ", grad " + grad_out.shape.to_string());
    DenseGrads g{Tensor(x.shape), Tensor(weights.shape), Tensor(Shape{units})};
    for (std::size_t u = 0; u < units; ++u) {
        const double gu = grad_out.data[u];
        const double* row = weights.data.data() + u * d;
        double* gw = g.grad_weights.data().data() + u * d;
        for (std::size_t k = 0; k < d; ++k) {
            g.grad_x[k] += row[k] * gu;
            gw[k] = gu * x.data[k];
        }
        g.grad_bias[u] = gu;
    }
    return g;
}

/// Max-shifted softmax over a rank-1 tensor.
inline Tensor softmax(ConstTensorView logits) {
    if (logits.size() < 2) throw DimensionError("softmax needs at least 2 logits");
    double mx = logits.data[0];
    for (double v : logits.data) mx = std::max(mx, v);
    Tensor out(logits.shape);
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(logits.data[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
}

struct LossAndGrad {
    double loss;
    Tensor grad_logits;
};

inline LossAndGrad cross_entropy_with_softmax(ConstTensorView logits, std::size_t target) {
    if (target >= logits.size())
        throw InputError("cross_entropy: target class " + std::to_string(target) + " out of range for " +
                         std::to_string(logits.size()) + " classes");
    double mx = logits.data[0];
    for (double v : logits.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits.data) sum += std::exp(v - mx);
    LossAndGrad r{std::log(sum) - (logits.data[target] - mx), softmax(logits)};
    r.grad_logits[target] -= 1.0;
    return r;
}

} // namespace selfonn
