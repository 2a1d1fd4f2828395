// SPDX-License-Identifier: Apache-2.0
#include "harmodop/error.hpp"
#include "harmodop/rng.hpp"

#include <cmath>
#include <numbers>

namespace harmodop {

std::string_view to_string(ErrorCategory category) noexcept
{
    switch (category) {
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::format: return "format";
    case ErrorCategory::io: return "io";
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    }
    return "unknown";
}

double Rng::normal()
{
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n == 0) {
        return 0;
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

}  // namespace harmodop
