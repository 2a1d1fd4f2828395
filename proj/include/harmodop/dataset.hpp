// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "harmodop/chain.hpp"
#include "harmodop/channel.hpp"
#include "harmodop/cnn/train.hpp"
#include "harmodop/motion.hpp"

namespace harmodop::dataset {

enum class Split { train, eval };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Held-out share of the full experiment (1,519 of 11,641 samples).
inline constexpr double kFullScaleEvalFraction = 1519.0 / 11641.0;
/// Trained-cohort share of the combined training set (7,002 of 10,122).
inline constexpr double kFullScaleTrainedShare = 7002.0 / 10122.0;

/// Case 1: trained cohort only. Case 2: untrained only. Case 3: both.
struct DatasetPlan {
    int case_id = 3;
    std::size_t per_class_count = 230;  // train + eval, per class
    double eval_fraction = kFullScaleEvalFraction;
    double trained_share = kFullScaleTrainedShare;  // case 3 only
    std::size_t image_size = 64;
    std::uint64_t seed = 1;
    std::size_t windows_per_trajectory = 1;
    double window_seconds = 2.0;
    double window_hop_seconds = 1.0;  // between windows cut from one trajectory
    std::size_t trained_subjects = 5;
    std::size_t trained_eval_subjects = 1;
    std::size_t untrained_subjects = 30;
    std::size_t untrained_eval_subjects = 4;
    bool tremor = false;  // class-4 hand tremor
    channel::RadarConfig radar;
    channel::TagConfig tag;
    channel::ImpairmentConfig impairments{1.05, 0.05, 0.02, -0.015, 0.005};
    dsp::ChainConfig chain;

    void validate() const;
    std::size_t eval_per_class() const;
    std::size_t train_per_class() const;
};

/// Full-size presets with the reported sample counts (7,002 / 3,120 /
/// 10,122 training samples for cases 1 / 2 / 3).
DatasetPlan full_scale_preset(int case_id);

nlohmann::json plan_to_json(const DatasetPlan& plan);
DatasetPlan plan_from_json(const nlohmann::json& j);

struct ManifestEntry {
    std::string image_path;  // relative to the manifest directory
    int class_id = 1;
    motion::Cohort cohort = motion::Cohort::trained;
    std::size_t subject_id = 0;
    std::uint64_t seed = 0;  // drives parameter draw, trajectory and noise
    std::size_t window_index = 0;
    Split split = Split::train;
    std::uint32_t image_crc = 0;  // CRC-32 of the PGM file
};

struct DatasetManifest {
    DatasetPlan plan;
    std::string content_hash;  // CRC-32 over the entry lines, hex
    std::vector<ManifestEntry> entries;

    std::size_t count(Split s) const;
    std::size_t count(Split s, int class_id) const;
    std::size_t count(motion::Cohort c) const;
};

/// Generates images under `out_dir/images` and writes `out_dir/manifest.jsonl`.
DatasetManifest generate_dataset(const DatasetPlan& plan, const std::filesystem::path& out_dir);

/// Builds the entry list (no images) for a plan; images are rendered separately.
std::vector<ManifestEntry> plan_entries(const DatasetPlan& plan);

/// Re-runs the physics and DSP pipeline for one entry.
dsp::SpectrogramImage render_entry(const DatasetPlan& plan, const ManifestEntry& entry);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<cnn::Example> train;
    std::vector<cnn::Example> eval;
};

/// Decodes every image, checking existence, size and checksum; errors name
/// the offending entry.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

/// Nearest-class-mean classifier on raw pixels, used as a separability floor.
class CentroidClassifier {
public:
    void fit(const std::vector<cnn::Example>& set);
    int predict(const std::vector<double>& pixels) const;
    double accuracy(const std::vector<cnn::Example>& set) const;

private:
    std::array<std::vector<double>, cnn::kNumClasses> centroids_;
};

}  // namespace harmodop::dataset
