// SPDX-License-Identifier: Apache-2.0
#include "harmodop/cnn/network.hpp"

#include <algorithm>
#include <cmath>

#include "harmodop/error.hpp"
#include "kernels.hpp"

namespace harmodop::cnn {

std::string to_string(Precision p)
{
    return p == Precision::f32 ? "f32" : "f64";
}

Precision precision_from_string(const std::string& s)
{
    if (s == "f32" || s == "float") {
        return Precision::f32;
    }
    if (s == "f64" || s == "double") {
        return Precision::f64;
    }
    throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

void NetworkSpec::validate() const
{
    if (input_size == 0) {
        throw DomainError("network input_size must be > 0");
    }
    if (conv_blocks.empty()) {
        throw DomainError("network needs at least one conv block");
    }
    for (const auto& b : conv_blocks) {
        if (b.filters == 0 || b.kernel == 0 || b.kernel % 2 == 0) {
            throw DomainError("conv block needs filters > 0 and an odd kernel size");
        }
        if (b.activation != Activation::relu) {
            throw DomainError("conv blocks support ReLU activation only");
        }
    }
    if (pool.window == 0 || pool.stride == 0 || !pool.same_padding) {
        throw DomainError("pooling needs window > 0, stride > 0 and same padding");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw DomainError("dropout_rate must lie in [0, 1)");
    }
    if (dense_widths.empty() || dense_widths.back() != kNumClasses) {
        throw DomainError("dense_widths must end with " + std::to_string(kNumClasses) + " outputs");
    }
    if (std::find(dense_widths.begin(), dense_widths.end(), std::size_t{0}) != dense_widths.end()) {
        throw DomainError("dense widths must be > 0");
    }
    if (output_activation != Activation::sigmoid) {
        throw DomainError("output activation must be sigmoid");
    }
}

std::size_t NetworkSpec::side_after(std::size_t blocks) const
{
    std::size_t side = input_size;
    for (std::size_t b = 0; b < blocks; ++b) {
        side = (side + pool.stride - 1) / pool.stride;
    }
    return side;
}

std::size_t NetworkSpec::flattened_size() const
{
    const std::size_t side = side_after(conv_blocks.size());
    return conv_blocks.back().filters * side * side;
}

std::vector<std::vector<std::size_t>> parameter_shapes(const NetworkSpec& spec)
{
    std::vector<std::vector<std::size_t>> shapes;
    std::size_t channels = 1;
    for (const auto& b : spec.conv_blocks) {
        shapes.push_back({b.filters, channels, b.kernel, b.kernel});
        shapes.push_back({b.filters});
        channels = b.filters;
    }
    std::size_t in = spec.flattened_size();
    for (std::size_t w : spec.dense_widths) {
        shapes.push_back({w, in});
        shapes.push_back({w});
        in = w;
    }
    return shapes;
}

std::size_t NetworkSpec::parameter_count() const
{
    std::size_t total = 0;
    for (const auto& s : parameter_shapes(*this)) {
        total += Tensor<double>::element_count(s);
    }
    return total;
}

ClassDecision decide(const std::array<double, kNumClasses>& scores, double hidden_threshold)
{
    ClassDecision d;
    d.scores = scores;
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c) {
        if (scores[c] > scores[best]) {
            best = c;
        }
    }
    double second = -1.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (c != best) {
            second = std::max(second, scores[c]);
        }
    }
    d.hidden_class = scores[best] + second > hidden_threshold;
    d.label = d.hidden_class ? 4 : static_cast<int>(best) + 1;
    return d;
}

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec))
{
    spec_.validate();
    Rng rng(seed);
    for (const auto& shape : parameter_shapes(spec_)) {
        Tensor<T> t(shape);
        if (shape.size() > 1) {
            const std::size_t fan_in = t.size() / shape[0];
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& x : t.data) {
                x = static_cast<T>(rng.uniform(-bound, bound));
            }
        }
        params_.push_back(std::move(t));
    }
}

template <typename T>
Network<T>::Network(NetworkSpec spec, std::vector<Tensor<T>> parameters)
    : spec_(std::move(spec)), params_(std::move(parameters))
{
    spec_.validate();
    const auto shapes = parameter_shapes(spec_);
    if (shapes.size() != params_.size()) {
        throw FormatError("parameter list has " + std::to_string(params_.size()) + " tensors, architecture needs " +
                          std::to_string(shapes.size()));
    }
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        if (params_[k].shape != shapes[k] || params_[k].data.size() != Tensor<T>::element_count(shapes[k])) {
            throw FormatError("parameter " + std::to_string(k) + " has shape " + params_[k].shape_str() +
                              " which does not match the architecture");
        }
    }
}

template <typename T>
std::vector<T> Network<T>::forward(std::span<const T> image, Workspace<T>& ws, Mode mode, Rng* rng) const
{
    const std::size_t n = spec_.input_size;
    if (image.size() != n * n) {
        throw DomainError("image has " + std::to_string(image.size()) + " pixels, network expects " +
                          std::to_string(n) + "x" + std::to_string(n));
    }
    if (mode == Mode::train && spec_.dropout_rate > 0.0 && rng == nullptr) {
        throw DomainError("train-mode forward needs a random source for dropout");
    }
    Rng dummy(0);
    Rng& r = rng ? *rng : dummy;

    const std::size_t nb = spec_.conv_blocks.size();
    ws.blocks.resize(nb);
    Tensor<T> x({1, n, n});
    std::copy(image.begin(), image.end(), x.data.begin());
    for (std::size_t b = 0; b < nb; ++b) {
        auto& blk = ws.blocks[b];
        const std::size_t pad = spec_.conv_blocks[b].kernel / 2;
        blk.input = std::move(x);
        blk.activated = relu_forward(conv2d_forward(blk.input, params_[2 * b], params_[2 * b + 1], pad));
        auto pooled = maxpool_forward(blk.activated, spec_.pool);
        blk.argmax = std::move(pooled.argmax);
        auto dropped = dropout(pooled.output, spec_.dropout_rate, mode, r);
        blk.mask = std::move(dropped.mask);
        x = std::move(dropped.output);
    }

    const std::size_t nd = spec_.dense_widths.size();
    ws.dense_inputs.resize(nd);
    ws.dense_outputs.resize(nd);
    x.shape = {x.size()};
    for (std::size_t d = 0; d < nd; ++d) {
        const std::size_t p = 2 * nb + 2 * d;
        ws.dense_inputs[d] = std::move(x);
        Tensor<T> z = dense_forward(ws.dense_inputs[d], params_[p], params_[p + 1]);
        if (d + 1 < nd) {
            ws.dense_outputs[d] = relu_forward(z);
            x = ws.dense_outputs[d];
        } else {
            ws.logits = z;
            ws.dense_outputs[d] = sigmoid_forward(z);
        }
    }
    return ws.dense_outputs.back().data;
}

template <typename T>
std::vector<T> Network<T>::backward_impl(const Workspace<T>& ws, std::span<const T> grad_logits, bool want_input)
{
    const std::size_t nb = spec_.conv_blocks.size();
    const std::size_t nd = spec_.dense_widths.size();
    if (grad_logits.size() != kNumClasses || ws.dense_inputs.size() != nd || ws.blocks.size() != nb) {
        throw DomainError("backward called without a matching forward pass");
    }
    for (auto& p : params_) {
        if (!p.has_grad()) {
            p.enable_grad();
        }
    }
    auto accumulate = [](Tensor<T>& param, const Tensor<T>& g) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            param.grad[k] += g[k];
        }
    };

    Tensor<T> g({kNumClasses});
    std::copy(grad_logits.begin(), grad_logits.end(), g.data.begin());
    for (std::size_t d = nd; d-- > 0;) {
        const std::size_t p = 2 * nb + 2 * d;
        if (d + 1 < nd) {
            g = relu_backward(ws.dense_outputs[d], g);
        }
        auto dg = dense_backward(ws.dense_inputs[d], params_[p], g);
        accumulate(params_[p], dg.weights);
        accumulate(params_[p + 1], dg.bias);
        g = std::move(dg.input);
    }

    for (std::size_t b = nb; b-- > 0;) {
        const auto& blk = ws.blocks[b];
        const std::size_t pad = spec_.conv_blocks[b].kernel / 2;
        if (!blk.mask.empty()) {
            for (std::size_t k = 0; k < g.size(); ++k) {
                g[k] *= blk.mask[k];
            }
        }
        g = maxpool_backward(g, blk.argmax, blk.activated.shape);
        g = relu_backward(blk.activated, g);
        if (b == 0 && !want_input) {
            // The first block's input gradient is never used in training.
            const std::size_t c = 1, k = spec_.conv_blocks[0].kernel;
            const std::size_t h = blk.input.dim(1), w = blk.input.dim(2);
            const std::size_t ho = kernels::conv_out_dim(h, k, pad), wo = kernels::conv_out_dim(w, k, pad);
            std::vector<T> col(c * k * k * ho * wo), col_t(col.size());
            kernels::im2col(blk.input.data.data(), c, h, w, k, pad, col.data());
            kernels::transpose(c * k * k, ho * wo, col.data(), col_t.data());
            kernels::gemm_nn(spec_.conv_blocks[0].filters, c * k * k, ho * wo, g.data.data(), col_t.data(),
                             params_[0].grad.data(), true);
            auto& bias = params_[1];
            for (std::size_t f = 0; f < bias.size(); ++f) {
                T s = T(0);
                for (std::size_t q = 0; q < ho * wo; ++q) {
                    s += g[f * ho * wo + q];
                }
                bias.grad[f] += s;
            }
            return {};
        }
        auto cg = conv2d_backward(blk.input, params_[2 * b], g, pad);
        accumulate(params_[2 * b], cg.weights);
        accumulate(params_[2 * b + 1], cg.bias);
        g = std::move(cg.input);
    }
    return g.data;
}

template <typename T>
void Network<T>::backward(const Workspace<T>& ws, std::span<const T> grad_logits)
{
    backward_impl(ws, grad_logits, false);
}

template <typename T>
std::vector<T> Network<T>::backward_input(const Workspace<T>& ws, std::span<const T> grad_logits)
{
    return backward_impl(ws, grad_logits, true);
}

template <typename T>
std::array<double, kNumClasses> Network<T>::predict(std::span<const double> pixels, Workspace<T>& ws) const
{
    std::vector<T> img(pixels.begin(), pixels.end());
    const auto out = forward(img, ws, Mode::eval);
    std::array<double, kNumClasses> scores{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        scores[c] = static_cast<double>(out[c]);
    }
    return scores;
}

template <typename T>
ClassDecision Network<T>::classify(std::span<const double> pixels, double hidden_threshold) const
{
    Workspace<T> ws;
    return decide(predict(pixels, ws), hidden_threshold);
}

template <typename T>
void Network<T>::enable_grad()
{
    for (auto& p : params_) {
        p.enable_grad();
    }
}

template <typename T>
void Network<T>::zero_grad()
{
    for (auto& p : params_) {
        if (p.has_grad()) {
            p.zero_grad();
        } else {
            p.enable_grad();
        }
    }
}

template class Network<float>;
template class Network<double>;

}  // namespace harmodop::cnn
