// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace harmodop::cnn {

/// Dense row-major array with an optional same-shape gradient buffer.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty when no gradient is tracked

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, T fill = T(0))
        : shape(std::move(dims)), data(element_count(shape), fill) {}

    static std::size_t element_count(const std::vector<std::size_t>& dims)
    {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }
    T& operator[](std::size_t k) { return data[k]; }
    const T& operator[](std::size_t k) const { return data[k]; }

    bool has_grad() const noexcept { return !grad.empty(); }
    void enable_grad() { grad.assign(data.size(), T(0)); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    std::string shape_str() const
    {
        std::string s = "[";
        for (std::size_t k = 0; k < shape.size(); ++k) {
            s += (k ? "x" : "") + std::to_string(shape[k]);
        }
        return s + "]";
    }
};

}  // namespace harmodop::cnn
