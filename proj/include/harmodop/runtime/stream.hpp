// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "harmodop/chain.hpp"
#include "harmodop/channel.hpp"
#include "harmodop/cnn/model.hpp"
#include "harmodop/motion.hpp"
#include "harmodop/runtime/queue.hpp"

namespace harmodop::runtime {

enum class SourceKind { synthesis, iq_file };

/// One stretch of a scripted live scenario.
struct Segment {
    int class_id = 4;
    double duration = 10.0;  // s
    motion::Cohort cohort = motion::Cohort::trained;
};

/// Parses "1:20,3:20" (class:seconds, optional ":untrained" suffix).
std::vector<Segment> parse_scenario(const std::string& text);

struct StreamConfig {
    double window_seconds = 2.0;
    double update_rate = 3.0;     // decisions per second
    double latency_budget = 0.5;  // s per window, DSP + inference
    SourceKind source = SourceKind::synthesis;
    std::vector<Segment> scenario{{3, 30.0}};
    std::filesystem::path iq_path;
    std::filesystem::path model_path;
    std::filesystem::path log_path;  // empty: no log file
    std::optional<std::filesystem::path> frame_dir;

    bool threaded = true;
    double speed = 0.0;  // source pacing relative to real time; 0 = as fast as possible
    std::size_t queue_capacity = 4;
    QueuePolicy policy = QueuePolicy::drop_oldest;  // used when paced
    double chunk_seconds = 0.1;

    double hidden_threshold = cnn::kDefaultHiddenThreshold;
    std::size_t baseline_history = 10;
    std::size_t baseline_update_every = 10;
    double baseline_margin = 0.05;

    std::uint64_t seed = 1;
    channel::RadarConfig radar;
    channel::TagConfig tag;
    channel::ImpairmentConfig impairments{1.05, 0.05, 0.02, -0.015, 0.005};
    dsp::ChainConfig chain;

    void validate() const;
    std::size_t window_samples() const;
};

struct DecisionRecord {
    std::size_t index = 0;
    double t = 0.0;  // stream time of the window end, s
    cnn::ClassDecision decision;
    double proc_ms = 0.0;
    bool short_circuit = false;  // decided by the no-signal path
};

struct StreamEvent {
    double t = 0.0;
    std::string kind;  // gap, source_error, frame_error
    std::string message;
};

struct StreamReport {
    std::vector<DecisionRecord> decisions;
    std::vector<StreamEvent> events;
    std::size_t windows_dropped = 0;
    std::size_t max_queue_depth = 0;
    double stream_seconds = 0.0;
    double wall_seconds = 0.0;

    double max_proc_ms() const;
    /// Decisions per stream second between the first and last decision.
    double decision_rate() const;
};

/// Concatenates per-segment trajectories with range continuity and
/// synthesizes one baseband stream. Segment k ground truth covers
/// [sum of earlier durations, + duration).
channel::BasebandSignal synthesize_scenario(const StreamConfig& cfg);

/// Runs source -> window assembler -> DSP -> inference -> sink. Size
/// mismatch between model and image is fatal before any data flows.
StreamReport stream(const StreamConfig& cfg, const cnn::Model& model);
StreamReport stream(const StreamConfig& cfg);

std::string decision_json(const DecisionRecord& r);

}  // namespace harmodop::runtime
