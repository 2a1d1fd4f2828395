// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "harmodop/cnn/network.hpp"

namespace harmodop::cnn {

template <typename T>
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<T>> m, v;

    void validate() const;
};

/// One bias-corrected Adam update using each parameter's grad slot.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

struct Example {
    std::vector<double> pixels;  // row-major, values in [0, 1]
    int class_id = 1;            // 1..4
};

std::array<double, kNumClasses> one_hot(int class_id);

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double train_acc = 0.0;
    double eval_acc = 0.0;
};

struct TrainOptions {
    std::size_t epochs = 60;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double hidden_threshold = kDefaultHiddenThreshold;
    std::function<void(const EpochLog&)> on_epoch;
};

/// Sample order for a given epoch (1-based); a pure function of the seed.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Mini-batch training on mean per-sample loss. Train loss and accuracy are
/// running figures over the epoch (dropout active); eval figures come from a
/// separate pass in eval mode. NaN eval figures when `eval` is empty.
template <typename T>
std::vector<EpochLog> train(Network<T>& net, const std::vector<Example>& train_set, const std::vector<Example>& eval,
                            const TrainOptions& options);

struct EvalResult {
    std::size_t count = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    // Rows: true class 1..4. Columns: predicted 1..4, then the hidden-class count.
    std::array<std::array<std::size_t, kNumClasses + 1>, kNumClasses> confusion{};
};

template <typename T>
EvalResult evaluate(const Network<T>& net, const std::vector<Example>& set,
                    double hidden_threshold = kDefaultHiddenThreshold);

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);
std::string confusion_csv(const EvalResult& result);
void write_confusion_csv(const EvalResult& result, const std::filesystem::path& path);

}  // namespace harmodop::cnn
