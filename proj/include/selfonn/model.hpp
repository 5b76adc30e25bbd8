#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/layer.hpp"
#include "selfonn/ops.hpp"
#include "selfonn/tensor.hpp"

namespace selfonn {

inline constexpr std::size_t kBlocks = 3;

/// Architecture of the three-block network. Defaults are the full-size
/// thermal model: 1x256x320 input, 8 filters per block with 5x5, 3x3, 2x2
/// kernels, a 32-unit tanh dense layer and 3 output classes.
struct ModelConfig {
    int q_order = 1;
    std::array<std::size_t, 3> input_shape{1, 256, 320}; // channels, height, width
    std::array<std::size_t, kBlocks> filters{8, 8, 8};
    std::array<std::size_t, kBlocks> kernel_sizes{5, 3, 2};
    std::size_t dense_units = 32;
    std::size_t classes = 3;

    static ModelConfig standard(int q = 1) {
        ModelConfig c;
        c.q_order = q;
        return c;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline std::string describe(const ModelConfig& c) {
    auto list = [](const auto& a) {
        std::string s;
        for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + std::to_string(a[i]);
        return s;
    };
    return "Q=" + std::to_string(c.q_order) + " input=" + list(c.input_shape) + " filters=" + list(c.filters) +
           " kernels=" + list(c.kernel_sizes) + " dense=" + std::to_string(c.dense_units) +
           " classes=" + std::to_string(c.classes);
}

struct BlockGeometry {
    std::size_t in_channels, in_h, in_w;
    std::size_t out_channels, kernel;
    std::size_t conv_h, conv_w; // after valid convolution
    std::size_t pool_h, pool_w; // after 2x2 pooling
};

struct ModelGeometry {
    std::array<BlockGeometry, kBlocks> blocks;
    std::size_t flatten;
};

/// Spatial chain of the network; throws ConfigError when a kernel or pool
/// does not fit.
inline ModelGeometry model_geometry(const ModelConfig& c) {
    if (c.q_order < 1) throw ConfigError("q_order must be >= 1");
    if (c.dense_units < 1 || c.classes < 2) throw ConfigError("need dense_units >= 1 and classes >= 2");
    ModelGeometry g{};
    std::size_t ch = c.input_shape[0], h = c.input_shape[1], w = c.input_shape[2];
    if (ch < 1 || h < 1 || w < 1) throw ConfigError("input dims must be >= 1");
    for (std::size_t b = 0; b < kBlocks; ++b) {
        const std::size_t k = c.kernel_sizes[b];
        if (c.filters[b] < 1 || k < 1) throw ConfigError("block " + std::to_string(b + 1) + ": filters and kernel must be >= 1");
        if (h < k || w < k)
            throw ConfigError("block " + std::to_string(b + 1) + ": " + std::to_string(k) + "x" + std::to_string(k) +
                              " kernel does not fit a " + std::to_string(h) + "x" + std::to_string(w) + " map");
        BlockGeometry& bg = g.blocks[b];
        bg = {ch, h, w, c.filters[b], k, h - k + 1, w - k + 1, 0, 0};
        if (bg.conv_h < 2 || bg.conv_w < 2)
            throw ConfigError("block " + std::to_string(b + 1) + ": " + std::to_string(bg.conv_h) + "x" +
                              std::to_string(bg.conv_w) + " map too small for 2x2 pooling");
        bg.pool_h = bg.conv_h / 2;
        bg.pool_w = bg.conv_w / 2;
        ch = bg.out_channels;
        h = bg.pool_h;
        w = bg.pool_w;
    }
    g.flatten = ch * h * w;
    return g;
}

/// Trainable parameter count: per block Q*(Cin*K*K*F) + Q*F, then both dense layers.
inline std::size_t param_count(const ModelConfig& c) {
    const ModelGeometry g = model_geometry(c);
    const auto q = static_cast<std::size_t>(c.q_order);
    std::size_t n = 0;
    for (const auto& b : g.blocks) n += q * (b.in_channels * b.kernel * b.kernel * b.out_channels) + q * b.out_channels;
    n += g.flatten * c.dense_units + c.dense_units;
    n += c.dense_units * c.classes + c.classes;
    return n;
}

struct ParamSegment {
    std::string name;
    std::size_t offset;
    Shape shape;

    std::size_t size() const { return shape.elements(); }
};

/// Segments of the flat parameter vector, in storage order.
inline std::vector<ParamSegment> param_layout(const ModelConfig& c) {
    const ModelGeometry g = model_geometry(c);
    const auto q = static_cast<std::size_t>(c.q_order);
    std::vector<ParamSegment> segs;
    std::size_t off = 0;
    auto add = [&](std::string name, Shape s) {
        segs.push_back({std::move(name), off, s});
        off += s.elements();
    };
    for (std::size_t b = 0; b < kBlocks; ++b) {
        const auto& bg = g.blocks[b];
        const std::string p = "block" + std::to_string(b + 1);
        add(p + ".kernels", Shape{q, bg.out_channels, bg.in_channels, bg.kernel, bg.kernel});
        add(p + ".biases", Shape{q, bg.out_channels});
    }
    add("dense1.weights", Shape{c.dense_units, g.flatten});
    add("dense1.bias", Shape{c.dense_units});
    add("dense2.weights", Shape{c.classes, c.dense_units});
    add("dense2.bias", Shape{c.classes});
    return segs;
}

struct DenseParams {
    Tensor weights; // [U, D]
    Tensor bias;    // [U]
};

struct DenseView {
    ConstTensorView weights;
    ConstTensorView bias;
};

/// Structured (owning) copy of every layer, the unflattened form of a Model.
struct ModelLayers {
    std::array<SelfOnnLayerParams, kBlocks> blocks;
    std::array<DenseParams, 2> dense;
};

/// Layer stack backed by a single flat parameter vector.
class Model {
public:
    explicit Model(ModelConfig config)
        : config_(config), geometry_(model_geometry(config)), layout_(param_layout(config)),
          params_(param_count(config), 0.0) {}

    Model(ModelConfig config, std::vector<double> params)
        : config_(config), geometry_(model_geometry(config)), layout_(param_layout(config)), params_(std::move(params)) {
        if (params_.size() != param_count(config_))
            throw DimensionError("flat parameter vector has " + std::to_string(params_.size()) + " values, config needs " +
                                 std::to_string(param_count(config_)));
    }

    const ModelConfig& config() const noexcept { return config_; }
    const ModelGeometry& geometry() const noexcept { return geometry_; }
    const std::vector<ParamSegment>& layout() const noexcept { return layout_; }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    std::vector<double> flatten() const { return params_; }

    SelfOnnLayerView block(std::size_t b) const {
        return {config_.q_order, segment_view(2 * b), segment_view(2 * b + 1)};
    }

    DenseView dense(std::size_t i) const {
        return {segment_view(2 * kBlocks + 2 * i), segment_view(2 * kBlocks + 2 * i + 1)};
    }

    ModelLayers layers() const {
        ModelLayers out;
        for (std::size_t b = 0; b < kBlocks; ++b) {
            const auto v = block(b);
            out.blocks[b] = SelfOnnLayerParams(config_.q_order, Tensor(v.kernels), Tensor(v.biases));
        }
        for (std::size_t i = 0; i < 2; ++i) out.dense[i] = {Tensor(dense(i).weights), Tensor(dense(i).bias)};
        return out;
    }

    static Model from_layers(const ModelConfig& config, const ModelLayers& layers) {
        Model m(config);
        std::size_t s = 0;
        auto put = [&](const Tensor& t) {
            const auto& seg = m.layout_[s++];
            if (!(t.shape() == seg.shape))
                throw DimensionError(seg.name + ": expected " + seg.shape.to_string() + ", got " + t.shape().to_string());
            std::copy(t.data().begin(), t.data().end(), m.params_.begin() + static_cast<std::ptrdiff_t>(seg.offset));
        };
        for (const auto& b : layers.blocks) {
            if (b.q_order != config.q_order) throw DimensionError("block Q differs from config Q");
            put(b.kernels);
            put(b.biases);
        }
        for (const auto& d : layers.dense) {
            put(d.weights);
            put(d.bias);
        }
        return m;
    }

private:
    ConstTensorView segment_view(std::size_t i) const {
        const auto& seg = layout_[i];
        return {seg.shape, std::span<const double>(params_).subspan(seg.offset, seg.size())};
    }

    ModelConfig config_;
    ModelGeometry geometry_;
    std::vector<ParamSegment> layout_;
    std::vector<double> params_;
};

/// Deterministic Glorot-uniform initialisation; biases start at zero. For
/// generative layers the fan-in counts all Q orders.
inline Model build_model(const ModelConfig& config, std::uint64_t seed) {
    Model m(config);
    std::mt19937_64 rng(seed);
    auto fill = [&](const ParamSegment& seg, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        auto p = m.parameters().subspan(seg.offset, seg.size());
        for (double& v : p) v = dist(rng);
    };
    const auto& g = m.geometry();
    const auto& layout = m.layout();
    const auto q = static_cast<double>(config.q_order);
    for (std::size_t b = 0; b < kBlocks; ++b) {
        const auto& bg = g.blocks[b];
        const double area = static_cast<double>(bg.kernel * bg.kernel);
        fill(layout[2 * b], static_cast<double>(bg.in_channels) * area * q, static_cast<double>(bg.out_channels) * area);
    }
    fill(layout[2 * kBlocks], static_cast<double>(g.flatten), static_cast<double>(config.dense_units));
    fill(layout[2 * kBlocks + 2], static_cast<double>(config.dense_units), static_cast<double>(config.classes));
    return m;
}

struct BlockCache {
    SelfOnnCache layer;
    Tensor activated; // tanh(conv output)
    PoolIndices pool;
};

/// Everything model_backward needs from a training-mode forward pass.
struct ForwardCache {
    ModelConfig config;
    std::array<BlockCache, kBlocks> blocks;
    Tensor flat;   // flattened output of the last pool, [D]
    Tensor hidden; // tanh(dense1), [U]
};

struct ForwardResult {
    Tensor logits;
    std::optional<ForwardCache> cache;
};

inline ForwardResult model_forward(const Model& model, ConstTensorView input, bool train_mode) {
    const auto& cfg = model.config();
    const Shape expected{cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]};
    if (!(input.shape == expected))
        throw DimensionError("model input " + input.shape.to_string() + " does not match config " + expected.to_string());

    ForwardResult r;
    if (train_mode) r.cache.emplace().config = cfg;

    Tensor x(input);
    for (std::size_t b = 0; b < kBlocks; ++b) {
        Tensor pre = train_mode ? selfonn_forward(model.block(b), x, r.cache->blocks[b].layer)
                                : selfonn_forward(model.block(b), x);
        Tensor act = tanh_forward(pre);
        PoolResult pooled = maxpool2x2(act);
        if (train_mode) {
            r.cache->blocks[b].activated = std::move(act);
            r.cache->blocks[b].pool = std::move(pooled.indices);
        }
        x = std::move(pooled.output);
    }
    Tensor flat = std::move(x).reshaped(Shape{model.geometry().flatten});
    Tensor hidden = tanh_forward(dense_forward(flat, model.dense(0).weights, model.dense(0).bias));
    r.logits = dense_forward(hidden, model.dense(1).weights, model.dense(1).bias);
    if (train_mode) {
        r.cache->flat = std::move(flat);
        r.cache->hidden = std::move(hidden);
    }
    return r;
}

struct ModelGradients {
    std::vector<double> params; // aligned with Model::parameters()
    Tensor input;               // empty unless requested
};

inline ModelGradients model_backward_full(const Model& model, const ForwardCache& cache, ConstTensorView grad_logits,
                                          bool want_input_grad) {
    if (!(cache.config == model.config()))
        throw ConsistencyError("forward cache was produced for a different model config");
    if (grad_logits.size() != model.config().classes)
        throw DimensionError("grad_logits has " + std::to_string(grad_logits.size()) + " entries, expected " +
                             std::to_string(model.config().classes));

    ModelGradients out{std::vector<double>(model.parameter_count(), 0.0), Tensor()};
    const auto& layout = model.layout();
    auto store = [&](std::size_t seg, const Tensor& t) {
        std::copy(t.data().begin(), t.data().end(), out.params.begin() + static_cast<std::ptrdiff_t>(layout[seg].offset));
    };

    DenseGrads d2 = dense_backward(cache.hidden, model.dense(1).weights, grad_logits);
    store(2 * kBlocks + 2, d2.grad_weights);
    store(2 * kBlocks + 3, d2.grad_bias);
    Tensor g_hidden = tanh_backward(cache.hidden, d2.grad_x);
    DenseGrads d1 = dense_backward(cache.flat, model.dense(0).weights, g_hidden);
    store(2 * kBlocks, d1.grad_weights);
    store(2 * kBlocks + 1, d1.grad_bias);

    const auto& last = model.geometry().blocks[kBlocks - 1];
    Tensor g = std::move(d1.grad_x).reshaped(Shape{last.out_channels, last.pool_h, last.pool_w});
    for (std::size_t bi = kBlocks; bi-- > 0;) {
        const BlockCache& bc = cache.blocks[bi];
        Tensor g_act = maxpool2x2_backward(g, bc.pool, bc.activated.shape());
        Tensor g_pre = tanh_backward(bc.activated, g_act);
        SelfOnnGrads lg = selfonn_backward(model.block(bi), bc.layer, g_pre, bi > 0 || want_input_grad);
        store(2 * bi, lg.grad_kernels);
        store(2 * bi + 1, lg.grad_biases);
        g = std::move(lg.grad_input);
    }
    if (want_input_grad) out.input = std::move(g);
    return out;
}

/// Flat parameter gradient for an upstream gradient on the logits.
inline std::vector<double> model_backward(const Model& model, const ForwardCache& cache, ConstTensorView grad_logits) {
    return model_backward_full(model, cache, grad_logits, false).params;
}

inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace selfonn
