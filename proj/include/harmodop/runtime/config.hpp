// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "harmodop/cnn/network.hpp"
#include "harmodop/cnn/train.hpp"
#include "harmodop/dataset.hpp"
#include "harmodop/runtime/stream.hpp"

namespace harmodop::runtime {

/// Ordered key/value pairs; later entries override earlier ones.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// One `key = value` per line, `#` starts a comment. `name` labels errors.
ConfigEntries parse_config(const std::string& text, const std::string& name);
ConfigEntries load_config_file(const std::filesystem::path& path);

inline constexpr const char* kConfigEnvVar = "HARMODOP_CONFIG";

/// Every tunable default in one place. The physical and DSP settings live in
/// `plan` and are copied into the stream configuration on use.
struct Settings {
    std::uint64_t seed = 1;
    dataset::DatasetPlan plan;
    cnn::NetworkSpec network;
    cnn::TrainOptions training;
    StreamConfig stream;
    double hidden_threshold = cnn::kDefaultHiddenThreshold;

    /// Throws UsageError for unknown keys and ConfigError for bad values.
    void apply(const std::string& key, const std::string& value);
    void apply(const ConfigEntries& entries);

    /// Derived views with the shared seed and physics settings filled in.
    dataset::DatasetPlan dataset_plan() const;
    cnn::TrainOptions train_options() const;
    StreamConfig stream_config() const;
    std::uint64_t init_seed() const;
};

std::vector<std::string> config_keys();

}  // namespace harmodop::runtime
