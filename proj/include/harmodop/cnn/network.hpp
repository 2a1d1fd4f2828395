// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "harmodop/cnn/ops.hpp"
#include "harmodop/cnn/tensor.hpp"

namespace harmodop::cnn {

inline constexpr std::size_t kNumClasses = 4;
inline constexpr double kDefaultHiddenThreshold = 1.6;

enum class Activation : std::uint8_t { relu = 1, sigmoid = 2 };
enum class Precision : std::uint8_t { f32 = 1, f64 = 2 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

struct ConvBlockSpec {
    std::size_t filters = 16;
    std::size_t kernel = 3;
    Activation activation = Activation::relu;
};

/// Conv blocks are conv (same padding) -> activation -> max pool -> dropout,
/// followed by a flatten and the dense stack. Hidden dense layers use ReLU,
/// the last one a per-class sigmoid.
struct NetworkSpec {
    std::size_t input_size = 64;
    std::vector<ConvBlockSpec> conv_blocks = {{16}, {32}, {64}, {64}, {128}, {128}};
    PoolSpec pool{};
    double dropout_rate = 0.25;
    std::vector<std::size_t> dense_widths = {256, 128, 64, kNumClasses};
    Activation output_activation = Activation::sigmoid;
    Precision precision = Precision::f64;

    void validate() const;
    /// Spatial side after block `b` (b = conv_blocks.size() gives the final side).
    std::size_t side_after(std::size_t blocks) const;
    std::size_t flattened_size() const;
    std::size_t parameter_count() const;
};

struct ClassDecision {
    std::array<double, kNumClasses> scores{};
    int label = 0;  // 1..4
    bool hidden_class = false;
    double timestamp = 0.0;
};

/// Decision rule: if the two largest scores sum above the threshold the
/// response is ambiguous and reported as class 4; otherwise argmax + 1 with
/// ties going to the lowest class.
ClassDecision decide(const std::array<double, kNumClasses>& scores, double hidden_threshold = kDefaultHiddenThreshold);

/// Per-call scratch so that inference on a shared network stays read-only.
template <typename T>
struct Workspace {
    struct Block {
        Tensor<T> input;
        Tensor<T> activated;
        std::vector<std::size_t> argmax;
        std::vector<T> mask;
    };
    std::vector<Block> blocks;
    std::vector<Tensor<T>> dense_inputs;
    std::vector<Tensor<T>> dense_outputs;  // post-activation
    Tensor<T> logits;
};

template <typename T>
class Network {
public:
    /// Kaiming-uniform weights, zero biases.
    Network(NetworkSpec spec, std::uint64_t seed);
    /// Adopts existing parameters; shapes must match the spec.
    Network(NetworkSpec spec, std::vector<Tensor<T>> parameters);

    const NetworkSpec& spec() const noexcept { return spec_; }
    const std::vector<Tensor<T>>& parameters() const noexcept { return params_; }
    std::vector<Tensor<T>>& parameters() noexcept { return params_; }

    /// Per-class sigmoid scores. In train mode `rng` drives dropout.
    std::vector<T> forward(std::span<const T> image, Workspace<T>& ws, Mode mode, Rng* rng = nullptr) const;

    /// Accumulates parameter gradients (into each tensor's grad slot) for
    /// the given gradient with respect to the output logits.
    void backward(const Workspace<T>& ws, std::span<const T> grad_logits);

    /// Same as backward but also returns dE/d(image); used by gradient checks.
    std::vector<T> backward_input(const Workspace<T>& ws, std::span<const T> grad_logits);

    std::array<double, kNumClasses> predict(std::span<const double> pixels, Workspace<T>& ws) const;
    ClassDecision classify(std::span<const double> pixels, double hidden_threshold = kDefaultHiddenThreshold) const;

    void enable_grad();
    void zero_grad();

private:
    std::vector<T> backward_impl(const Workspace<T>& ws, std::span<const T> grad_logits, bool want_input);

    NetworkSpec spec_;
    std::vector<Tensor<T>> params_;  // conv w,b per block then dense w,b per layer
};

/// Parameter shapes in storage order.
std::vector<std::vector<std::size_t>> parameter_shapes(const NetworkSpec& spec);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace harmodop::cnn
