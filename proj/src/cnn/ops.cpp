// SPDX-License-Identifier: Apache-2.0
#include "harmodop/cnn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "harmodop/error.hpp"
#include "kernels.hpp"

namespace harmodop::cnn {

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* what)
{
    if (t.shape.size() != rank) {
        throw DomainError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                          t.shape_str());
    }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weights, std::size_t padding)
{
    require_rank(input, 3, "conv2d input");
    require_rank(weights, 4, "conv2d weights");
    if (weights.dim(1) != input.dim(0) || weights.dim(2) != weights.dim(3)) {
        throw DomainError("conv2d shape mismatch: input " + input.shape_str() + " vs weights " + weights.shape_str());
    }
    const std::size_t k = weights.dim(2);
    if (input.dim(1) + 2 * padding < k || input.dim(2) + 2 * padding < k) {
        throw DomainError("conv2d kernel does not fit: input " + input.shape_str() + " vs weights " +
                          weights.shape_str() + " with padding " + std::to_string(padding));
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t padding)
{
    check_conv_shapes(input, weights, padding);
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t f = weights.dim(0), k = weights.dim(2);
    if (bias.size() != f) {
        throw DomainError("conv2d bias " + bias.shape_str() + " does not match weights " + weights.shape_str());
    }
    const std::size_t ho = kernels::conv_out_dim(h, k, padding);
    const std::size_t wo = kernels::conv_out_dim(w, k, padding);
    std::vector<T> col(c * k * k * ho * wo);
    kernels::im2col(input.data.data(), c, h, w, k, padding, col.data());
    Tensor<T> out({f, ho, wo});
    for (std::size_t o = 0; o < f; ++o) {
        std::fill(out.data.begin() + static_cast<long>(o * ho * wo),
                  out.data.begin() + static_cast<long>((o + 1) * ho * wo), bias[o]);
    }
    kernels::gemm_nn(f, ho * wo, c * k * k, weights.data.data(), col.data(), out.data.data(), true);
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_output,
                             std::size_t padding)
{
    check_conv_shapes(input, weights, padding);
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t f = weights.dim(0), k = weights.dim(2);
    const std::size_t ho = kernels::conv_out_dim(h, k, padding);
    const std::size_t wo = kernels::conv_out_dim(w, k, padding);
    if (grad_output.shape != std::vector<std::size_t>{f, ho, wo}) {
        throw DomainError("conv2d_backward: grad_output " + grad_output.shape_str() + " does not match expected [" +
                          std::to_string(f) + "x" + std::to_string(ho) + "x" + std::to_string(wo) + "]");
    }
    const std::size_t ckk = c * k * k, p = ho * wo;
    std::vector<T> col(ckk * p), col_t(p * ckk), dcol(ckk * p);
    kernels::im2col(input.data.data(), c, h, w, k, padding, col.data());
    kernels::transpose(ckk, p, col.data(), col_t.data());

    ConvGrads<T> g{Tensor<T>(input.shape), Tensor<T>(weights.shape), Tensor<T>({f})};
    kernels::gemm_nn(f, ckk, p, grad_output.data.data(), col_t.data(), g.weights.data.data(), false);
    for (std::size_t o = 0; o < f; ++o) {
        T s = T(0);
        for (std::size_t q = 0; q < p; ++q) {
            s += grad_output[o * p + q];
        }
        g.bias[o] = s;
    }
    kernels::gemm_tn(ckk, p, f, weights.data.data(), grad_output.data.data(), dcol.data(), false);
    kernels::col2im_add(dcol.data(), c, h, w, k, padding, g.input.data.data());
    return g;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolSpec& spec)
{
    require_rank(input, 3, "maxpool input");
    if (spec.window == 0 || spec.stride == 0) {
        throw DomainError("maxpool: window and stride must be > 0");
    }
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (!spec.same_padding && (h < spec.window || w < spec.window)) {
        throw DomainError("maxpool: input " + input.shape_str() + " smaller than window " +
                          std::to_string(spec.window));
    }
    const auto g = kernels::pool_geometry(h, w, spec.window, spec.stride, spec.same_padding);
    PoolResult<T> res{Tensor<T>({c, g.out_h, g.out_w}), std::vector<std::size_t>(c * g.out_h * g.out_w)};
    kernels::maxpool(input.data.data(), c, h, w, spec.window, spec.stride, g, res.output.data.data(),
                     res.argmax.data());
    return res;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_output, const std::vector<std::size_t>& argmax,
                           const std::vector<std::size_t>& input_shape)
{
    if (argmax.size() != grad_output.size()) {
        throw DomainError("maxpool_backward: argmax size does not match grad_output " + grad_output.shape_str());
    }
    Tensor<T> gi(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) {
        gi[argmax[o]] += grad_output[o];
    }
    return gi;
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng)
{
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw DomainError("dropout: rate must lie in [0, 1)");
    }
    DropoutResult<T> res{input, {}};
    if (mode == Mode::eval || rate == 0.0) {
        return res;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    res.mask.resize(input.size());
    for (std::size_t k = 0; k < input.size(); ++k) {
        res.mask[k] = rng.uniform() < rate ? T(0) : keep_scale;
        res.output[k] = input[k] * res.mask[k];
    }
    return res;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias)
{
    require_rank(weights, 2, "dense weights");
    const std::size_t out = weights.dim(0), in = weights.dim(1);
    if (input.size() != in || bias.size() != out) {
        throw DomainError("dense shape mismatch: input " + input.shape_str() + ", weights " + weights.shape_str() +
                          ", bias " + bias.shape_str());
    }
    Tensor<T> y({out});
    for (std::size_t o = 0; o < out; ++o) {
        const T* row = weights.data.data() + o * in;
        T s = bias[o];
        for (std::size_t i = 0; i < in; ++i) {
            s += row[i] * input[i];
        }
        y[o] = s;
    }
    return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_output)
{
    require_rank(weights, 2, "dense weights");
    const std::size_t out = weights.dim(0), in = weights.dim(1);
    if (input.size() != in || grad_output.size() != out) {
        throw DomainError("dense_backward shape mismatch: input " + input.shape_str() + ", weights " +
                          weights.shape_str() + ", grad_output " + grad_output.shape_str());
    }
    DenseGrads<T> g{Tensor<T>(input.shape), Tensor<T>(weights.shape), Tensor<T>({out})};
    for (std::size_t o = 0; o < out; ++o) {
        const T go = grad_output[o];
        g.bias[o] = go;
        T* wrow = g.weights.data.data() + o * in;
        const T* row = weights.data.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            wrow[i] = go * input[i];
            g.input[i] += row[i] * go;
        }
    }
    return g;
}

template <typename T>
T sigmoid(T x)
{
    // Split by sign so exp never overflows.
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input)
{
    Tensor<T> out(input.shape);
    for (std::size_t k = 0; k < input.size(); ++k) {
        out[k] = input[k] > T(0) ? input[k] : T(0);
    }
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output)
{
    Tensor<T> g(output.shape);
    for (std::size_t k = 0; k < output.size(); ++k) {
        g[k] = output[k] > T(0) ? grad_output[k] : T(0);
    }
    return g;
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& input)
{
    Tensor<T> out(input.shape);
    for (std::size_t k = 0; k < input.size(); ++k) {
        out[k] = sigmoid(input[k]);
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_output)
{
    Tensor<T> g(output.shape);
    for (std::size_t k = 0; k < output.size(); ++k) {
        g[k] = grad_output[k] * output[k] * (T(1) - output[k]);
    }
    return g;
}

template <typename T>
LossResult<T> loss_multilabel(std::span<const T> y_pred, std::span<const T> y_true)
{
    if (y_pred.size() != y_true.size()) {
        throw DomainError("loss_multilabel: prediction and target sizes differ");
    }
    const T lo = static_cast<T>(kLossClamp);
    const T hi = T(1) - lo;
    LossResult<T> res;
    res.grad.resize(y_pred.size());
    for (std::size_t c = 0; c < y_pred.size(); ++c) {
        const T p = std::clamp(y_pred[c], lo, hi);
        const T t = y_true[c];
        res.loss -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
        // Zero outside the clamp interval, matching the clamped function.
        const bool inside = y_pred[c] > lo && y_pred[c] < hi;
        res.grad[c] = inside ? (p - t) / (p * (T(1) - p)) : T(0);
    }
    return res;
}

#define HARMODOP_INSTANTIATE_OPS(T)                                                                          \
    template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);    \
    template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
    template PoolResult<T> maxpool_forward(const Tensor<T>&, const PoolSpec&);                               \
    template Tensor<T> maxpool_backward(const Tensor<T>&, const std::vector<std::size_t>&,                   \
                                        const std::vector<std::size_t>&);                                    \
    template DropoutResult<T> dropout(const Tensor<T>&, double, Mode, Rng&);                                 \
    template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
    template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template T sigmoid(T);                                                                                   \
    template Tensor<T> relu_forward(const Tensor<T>&);                                                       \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> sigmoid_forward(const Tensor<T>&);                                                    \
    template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                                 \
    template LossResult<T> loss_multilabel(std::span<const T>, std::span<const T>);

HARMODOP_INSTANTIATE_OPS(float)
HARMODOP_INSTANTIATE_OPS(double)

#undef HARMODOP_INSTANTIATE_OPS

}  // namespace harmodop::cnn
