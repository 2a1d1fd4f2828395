// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "harmodop/cnn/network.hpp"
#include "harmodop/dsp.hpp"

namespace harmodop::cnn {

using Model = std::variant<Network<float>, Network<double>>;

inline constexpr std::uint16_t kModelVersion = 1;

/// Fresh model at the precision named in the spec.
Model make_model(const NetworkSpec& spec, std::uint64_t seed);
const NetworkSpec& model_spec(const Model& model);

/// "HMNN" file: version, precision flag, architecture block, parameter
/// payload, trailing CRC-32 over everything before it.
std::vector<std::uint8_t> encode_model(const Model& model);
/// Verifies the checksum before parsing anything; throws FormatError.
Model decode_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

ClassDecision classify(const Model& model, const dsp::SpectrogramImage& image,
                       double hidden_threshold = kDefaultHiddenThreshold);

}  // namespace harmodop::cnn
