// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace harmodop::motion {

/// The four held-object activity classes. Values are the 1-based labels
/// used in files and decision logs.
enum class ActivityClass : std::uint8_t {
    fast_periodic = 1,  // fast (>2 m/s) periodic motion over a short distance
    fast_slow = 2,      // fast stroke followed by a slow return, 0.5-1 m extent
    sinusoidal = 3,     // 0.5-1 m/s periodic motion over about 1 m
    no_motion = 4,
};

constexpr int kNumClasses = 4;

/// Throws DomainError for values outside 1..4.
ActivityClass activity_from_id(int class_id);
constexpr int class_id(ActivityClass c) noexcept { return static_cast<int>(c); }
std::string_view class_name(ActivityClass c) noexcept;

enum class Cohort : std::uint8_t { trained, untrained };
std::string_view to_string(Cohort c) noexcept;
Cohort cohort_from_string(std::string_view s);

struct MotionParams {
    ActivityClass activity = ActivityClass::no_motion;
    double r0 = 1.2;          // initial (mean) range, m
    double amplitude = 0.0;   // stroke half-extent, m
    double rate = 0.0;        // cycles per second
    double speed_peak = 0.0;  // peak radial speed, m/s
    double phase = 0.0;       // initial cycle phase, rad
    double jitter = 0.0;      // per-cycle multiplicative spread in [0, 1]
    std::uint64_t seed = 0;
    // Class 4 only: small hand tremor, amplitude capped at 1 mm.
    bool tremor = false;
    double tremor_amplitude = 0.0005;
    double tremor_rate = 6.0;
};

/// Speed and extent bounds a class must satisfy.
struct ClassEnvelope {
    double speed_min = 0.0;
    double speed_max = 0.0;
    bool speed_min_exclusive = false;
    double extent_min = 0.0;
    double extent_max = 0.0;
};

ClassEnvelope envelope(ActivityClass c) noexcept;

/// Nominal (population-centre) parameters of a class.
MotionParams nominal_params(ActivityClass c);

/// Cycle rate implied by a stroke half-extent and peak speed.
/// Sinusoidal strokes peak at 2*pi*f*A; the class-2 fast stroke peaks at 4*pi*f*A.
double rate_for(ActivityClass c, double amplitude, double speed_peak);

/// Builds parameters with the rate derived from amplitude and speed.
MotionParams make_params(ActivityClass c, double r0, double amplitude, double speed_peak, double phase = 0.0,
                         double jitter = 0.0, std::uint64_t seed = 0);

/// Throws DomainError naming the first violated bound.
void validate(const MotionParams& p);

struct MotionTrajectory {
    MotionParams params;
    double sample_rate = 0.0;
    std::vector<double> t;  // s
    std::vector<double> r;  // m
    std::vector<double> v;  // m/s, positive when approaching (v = -dr/dt)

    std::size_t size() const noexcept { return t.size(); }
};

/// Deterministic given (params, duration, sample_rate).
MotionTrajectory generate_trajectory(const MotionParams& params, double duration, double sample_rate);

/// Straight-line approach at constant radial speed, r(t) = r0 - v t. Used for
/// Doppler calibration; not one of the activity classes.
MotionTrajectory constant_velocity(double r0, double v_r, double duration, double sample_rate);

/// Draws `count` parameter sets around the class nominal. Trained cohorts vary
/// by +-10%, untrained by +-40% with per-cycle jitter up to 0.3. Draws are
/// restricted to the class envelope.
std::vector<MotionParams> sample_population(ActivityClass c, Cohort cohort, std::size_t count, std::uint64_t seed);

// Trajectory files ------------------------------------------------------------

/// "HMDT" binary: magic, u16 version, f64 sample rate, u64 length, u8 class,
/// then interleaved (r, v) f64 pairs, little-endian.
void write_trajectory(const MotionTrajectory& traj, const std::filesystem::path& path);
MotionTrajectory read_trajectory(const std::filesystem::path& path);
void write_trajectory_csv(const MotionTrajectory& traj, const std::filesystem::path& path);

}  // namespace harmodop::motion
