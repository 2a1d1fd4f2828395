// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "harmodop/cnn/tensor.hpp"
#include "harmodop/rng.hpp"

namespace harmodop::cnn {

enum class Mode { train, eval };

// Convolution ----------------------------------------------------------------
// input C x H x W, weights F x C x k x k, bias F; stride 1, symmetric zero
// padding. Output F x Ho x Wo with Ho = H + 2 pad - k + 1.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t padding);

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_output,
                             std::size_t padding);

// Max pooling ----------------------------------------------------------------

struct PoolSpec {
    std::size_t window = 3;
    std::size_t stride = 2;
    bool same_padding = true;  // output ceil(H / stride); padding never wins
};

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<std::size_t> argmax;  // flat input index per output cell
};

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolSpec& spec);

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_output, const std::vector<std::size_t>& argmax,
                           const std::vector<std::size_t>& input_shape);

// Dropout --------------------------------------------------------------------

template <typename T>
struct DropoutResult {
    Tensor<T> output;
    std::vector<T> mask;  // 0 or 1/(1-rate) per element; empty in eval mode
};

/// Inverted dropout: survivors are scaled by 1/(1-rate); eval mode is identity.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng);

// Dense and activations ------------------------------------------------------

/// y = W x + b with W stored out x in.
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_output);

template <typename T>
T sigmoid(T x);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
/// Gradient through ReLU given its output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& input);
/// Gradient through the sigmoid given its output.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

// Loss -----------------------------------------------------------------------

inline constexpr double kLossClamp = 1e-7;

template <typename T>
struct LossResult {
    T loss = T(0);
    std::vector<T> grad;  // dE / dy_pred
};

/// Multi-label binary cross-entropy, natural log, summed over classes:
/// E = -sum_c [t_c ln p_c + (1 - t_c) ln(1 - p_c)], p clamped to [1e-7, 1 - 1e-7].
template <typename T>
LossResult<T> loss_multilabel(std::span<const T> y_pred, std::span<const T> y_true);

}  // namespace harmodop::cnn
