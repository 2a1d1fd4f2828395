// SPDX-License-Identifier: Apache-2.0
#include "harmodop/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "harmodop/binary_io.hpp"
#include "harmodop/error.hpp"
#include "harmodop/rng.hpp"

namespace harmodop::motion {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxRange = 2.0;
constexpr double kMaxTremor = 1e-3;
// Class-2 cycles spend this fraction of the period on the fast stroke.
constexpr double kFastFraction = 0.25;
// Closest approach kept between a sampled stroke and the radar.
constexpr double kStandoff = 0.1;
// Jittered cycles peak at most this fraction of the class speed ceiling.
constexpr double kJitterSpeedHeadroom = 0.97;

std::string fmt_bound(const char* what, double value, const char* rel, double bound)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s = %.6g violates bound %s %.6g", what, value, rel, bound);
    return buf;
}

double speed_factor(ActivityClass c)
{
    return c == ActivityClass::fast_slow ? 2.0 * kTwoPi : kTwoPi;
}

// Worst-case stroke half-extent once per-cycle jitter is applied.
double amplitude_cap(const MotionParams& p)
{
    const auto env = envelope(p.activity);
    return std::min(p.amplitude * (1.0 + p.jitter), env.extent_max / 2.0);
}

/// Normalized class-2 displacement s(u) in [0, 1] over one cycle u in [0, 1),
/// plus ds/du. Raised-cosine ramps keep velocity continuous at the joins.
void fast_slow_shape(double u, double& s, double& ds)
{
    if (u < kFastFraction) {
        const double x = std::numbers::pi * u / kFastFraction;
        s = 0.5 * (1.0 - std::cos(x));
        ds = 0.5 * (std::numbers::pi / kFastFraction) * std::sin(x);
    } else {
        const double x = std::numbers::pi * (u - kFastFraction) / (1.0 - kFastFraction);
        s = 0.5 * (1.0 + std::cos(x));
        ds = -0.5 * (std::numbers::pi / (1.0 - kFastFraction)) * std::sin(x);
    }
}

/// Per-cycle amplitude and peak-speed knots, drawn lazily in cycle order.
/// Speed rather than rate is blended so the peak speed between two cycles
/// never exceeds the larger knot.
class CycleKnots {
public:
    explicit CycleKnots(const MotionParams& p) : p_(p), env_(envelope(p.activity)), rng_(p.seed) {}

    void ensure(std::size_t k)
    {
        while (amp_.size() <= k) {
            double a = p_.amplitude;
            double speed = p_.speed_peak;
            if (p_.jitter > 0.0) {
                a *= rng_.uniform(1.0 - p_.jitter, 1.0 + p_.jitter);
                const double f = p_.rate * rng_.uniform(1.0 - p_.jitter, 1.0 + p_.jitter);
                a = std::clamp(a, env_.extent_min / 2.0, env_.extent_max / 2.0);
                double lo = env_.speed_min;
                if (env_.speed_min_exclusive) {
                    lo *= 1.0 + 1e-3;
                }
                // Headroom for the amplitude-ramp term between unequal cycles.
                speed = std::clamp(speed_factor(p_.activity) * f * a, lo, kJitterSpeedHeadroom * env_.speed_max);
            }
            amp_.push_back(a);
            speed_.push_back(speed);
        }
    }

    // Raised-cosine blend between the knots of cycle k and k + 1.
    void at(double theta, double& amp, double& damp_dtheta, double& rate)
    {
        const double cycles = theta / kTwoPi;
        const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(cycles)));
        ensure(k + 1);
        const double frac = cycles - static_cast<double>(k);
        const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * frac));
        const double dw_dtheta = 0.5 * std::numbers::pi * std::sin(std::numbers::pi * frac) / kTwoPi;
        amp = amp_[k] + (amp_[k + 1] - amp_[k]) * w;
        damp_dtheta = (amp_[k + 1] - amp_[k]) * dw_dtheta;
        if (p_.jitter == 0.0) {
            rate = p_.rate;
        } else {
            const double speed = speed_[k] + (speed_[k + 1] - speed_[k]) * w;
            rate = speed / (speed_factor(p_.activity) * amp);
        }
    }

private:
    MotionParams p_;
    ClassEnvelope env_;
    Rng rng_;
    std::vector<double> amp_;
    std::vector<double> speed_;
};

}  // namespace

ActivityClass activity_from_id(int class_id)
{
    if (class_id < 1 || class_id > kNumClasses) {
        throw DomainError("invalid class_id " + std::to_string(class_id) + " (expected 1..4)");
    }
    return static_cast<ActivityClass>(class_id);
}

std::string_view class_name(ActivityClass c) noexcept
{
    switch (c) {
    case ActivityClass::fast_periodic: return "fast-periodic";
    case ActivityClass::fast_slow: return "fast-slow";
    case ActivityClass::sinusoidal: return "sinusoidal";
    case ActivityClass::no_motion: return "no-motion";
    }
    return "unknown";
}

std::string_view to_string(Cohort c) noexcept
{
    return c == Cohort::trained ? "trained" : "untrained";
}

Cohort cohort_from_string(std::string_view s)
{
    if (s == "trained") {
        return Cohort::trained;
    }
    if (s == "untrained") {
        return Cohort::untrained;
    }
    throw DomainError("invalid cohort '" + std::string(s) + "' (expected trained|untrained)");
}

ClassEnvelope envelope(ActivityClass c) noexcept
{
    switch (c) {
    case ActivityClass::fast_periodic: return {2.0, 4.5, true, 0.02, 0.3};
    case ActivityClass::fast_slow: return {1.0, 4.5, false, 0.5, 1.0};
    case ActivityClass::sinusoidal: return {0.5, 1.0, false, 0.8, 1.2};
    case ActivityClass::no_motion: return {0.0, 0.0, false, 0.0, 0.0};
    }
    return {};
}

double rate_for(ActivityClass c, double amplitude, double speed_peak)
{
    if (c == ActivityClass::no_motion) {
        return 0.0;
    }
    if (amplitude <= 0.0) {
        throw DomainError(fmt_bound("amplitude", amplitude, ">", 0.0));
    }
    return speed_peak / (speed_factor(c) * amplitude);
}

MotionParams make_params(ActivityClass c, double r0, double amplitude, double speed_peak, double phase, double jitter,
                         std::uint64_t seed)
{
    MotionParams p;
    p.activity = c;
    p.r0 = r0;
    p.amplitude = c == ActivityClass::no_motion ? 0.0 : amplitude;
    p.speed_peak = c == ActivityClass::no_motion ? 0.0 : speed_peak;
    p.rate = rate_for(c, p.amplitude, p.speed_peak);
    p.phase = phase;
    p.jitter = jitter;
    p.seed = seed;
    return p;
}

MotionParams nominal_params(ActivityClass c)
{
    switch (c) {
    case ActivityClass::fast_periodic: return make_params(c, 1.2, 0.08, 2.8);
    case ActivityClass::fast_slow: return make_params(c, 1.2, 0.35, 2.6);
    case ActivityClass::sinusoidal: return make_params(c, 1.2, 0.5, 0.75);
    case ActivityClass::no_motion: return make_params(c, 1.2, 0.0, 0.0);
    }
    return {};
}

void validate(const MotionParams& p)
{
    const int id = class_id(p.activity);
    if (id < 1 || id > kNumClasses) {
        throw DomainError("invalid class_id " + std::to_string(id) + " (expected 1..4)");
    }
    if (!(p.r0 > 0.0)) {
        throw DomainError(fmt_bound("r0", p.r0, ">", 0.0));
    }
    if (!(p.r0 <= kMaxRange)) {
        throw DomainError(fmt_bound("r0", p.r0, "<=", kMaxRange));
    }
    if (!(p.jitter >= 0.0 && p.jitter <= 1.0)) {
        throw DomainError("jitter = " + std::to_string(p.jitter) + " violates bound 0 <= jitter <= 1");
    }
    if (!std::isfinite(p.phase)) {
        throw DomainError("phase must be finite");
    }
    const auto env = envelope(p.activity);
    if (p.activity == ActivityClass::no_motion) {
        if (p.speed_peak != 0.0) {
            throw DomainError(fmt_bound("speed_peak (class 4)", p.speed_peak, "==", 0.0));
        }
        if (p.tremor && !(p.tremor_amplitude >= 0.0 && p.tremor_amplitude <= kMaxTremor)) {
            throw DomainError(fmt_bound("tremor_amplitude", p.tremor_amplitude, "<=", kMaxTremor));
        }
        if (p.tremor && p.r0 - p.tremor_amplitude <= 0.0) {
            throw DomainError(fmt_bound("r0 - tremor_amplitude", p.r0 - p.tremor_amplitude, ">", 0.0));
        }
        return;
    }
    const bool speed_low = env.speed_min_exclusive ? !(p.speed_peak > env.speed_min) : !(p.speed_peak >= env.speed_min);
    if (speed_low) {
        throw DomainError(fmt_bound("speed_peak", p.speed_peak, env.speed_min_exclusive ? ">" : ">=", env.speed_min));
    }
    if (!(p.speed_peak <= env.speed_max)) {
        throw DomainError(fmt_bound("speed_peak", p.speed_peak, "<=", env.speed_max));
    }
    const double extent = 2.0 * p.amplitude;
    if (!(extent >= env.extent_min)) {
        throw DomainError(fmt_bound("stroke extent (2*amplitude)", extent, ">=", env.extent_min));
    }
    if (!(extent <= env.extent_max)) {
        throw DomainError(fmt_bound("stroke extent (2*amplitude)", extent, "<=", env.extent_max));
    }
    const double expected_rate = rate_for(p.activity, p.amplitude, p.speed_peak);
    if (!(std::abs(p.rate - expected_rate) <= 1e-9 * expected_rate)) {
        throw DomainError(fmt_bound("rate", p.rate, "== speed_peak/(k*amplitude) =", expected_rate));
    }
    const double closest = p.r0 - amplitude_cap(p);
    if (!(closest > 0.0)) {
        throw DomainError(fmt_bound("closest range r0 - amplitude", closest, ">", 0.0));
    }
}

MotionTrajectory generate_trajectory(const MotionParams& params, double duration, double sample_rate)
{
    if (!(duration > 0.0)) {
        throw DomainError(fmt_bound("duration", duration, ">", 0.0));
    }
    if (!(sample_rate >= 100.0)) {
        throw DomainError(fmt_bound("sample_rate", sample_rate, ">=", 100.0));
    }
    validate(params);

    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(duration * sample_rate)));
    MotionTrajectory traj;
    traj.params = params;
    traj.sample_rate = sample_rate;
    traj.t.resize(n);
    traj.r.resize(n);
    traj.v.resize(n);
    const double dt = 1.0 / sample_rate;
    for (std::size_t k = 0; k < n; ++k) {
        traj.t[k] = static_cast<double>(k) * dt;
    }

    if (params.activity == ActivityClass::no_motion) {
        for (std::size_t k = 0; k < n; ++k) {
            if (params.tremor) {
                const double w = kTwoPi * params.tremor_rate;
                const double x = w * traj.t[k] + params.phase;
                traj.r[k] = params.r0 + params.tremor_amplitude * std::sin(x);
                traj.v[k] = -params.tremor_amplitude * w * std::cos(x);
            } else {
                traj.r[k] = params.r0;
                traj.v[k] = 0.0;
            }
        }
        return traj;
    }

    CycleKnots knots(params);
    // Phase is kept non-negative so cycle indices start at zero.
    const double theta0 = std::fmod(std::fmod(params.phase, kTwoPi) + kTwoPi, kTwoPi);
    const bool fast_slow = params.activity == ActivityClass::fast_slow;

    auto theta_rate = [&](double theta) {
        double a = 0.0, da = 0.0, f = 0.0;
        knots.at(theta, a, da, f);
        return kTwoPi * f;
    };

    double theta = theta0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) {
            if (params.jitter == 0.0) {
                theta = theta0 + kTwoPi * params.rate * traj.t[k];
            } else {
                // RK4 on dtheta/dt = 2*pi*f(theta).
                const double k1 = theta_rate(theta);
                const double k2 = theta_rate(theta + 0.5 * dt * k1);
                const double k3 = theta_rate(theta + 0.5 * dt * k2);
                const double k4 = theta_rate(theta + dt * k3);
                theta += dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            }
        }
        double amp = 0.0, damp = 0.0, f = 0.0;
        knots.at(theta, amp, damp, f);
        const double dtheta_dt = kTwoPi * f;
        double dr_dtheta = 0.0;
        if (fast_slow) {
            const double cycles = theta / kTwoPi;
            const double u = cycles - std::floor(cycles);
            double s = 0.0, ds = 0.0;
            fast_slow_shape(u, s, ds);
            traj.r[k] = params.r0 + amp * (2.0 * s - 1.0);
            dr_dtheta = damp * (2.0 * s - 1.0) + amp * 2.0 * ds / kTwoPi;
        } else {
            const double sn = std::sin(theta);
            traj.r[k] = params.r0 + amp * sn;
            dr_dtheta = damp * sn + amp * std::cos(theta);
        }
        traj.v[k] = -dtheta_dt * dr_dtheta;
    }
    return traj;
}

MotionTrajectory constant_velocity(double r0, double v_r, double duration, double sample_rate)
{
    if (!(duration > 0.0) || !(sample_rate > 0.0)) {
        throw DomainError("constant_velocity: duration and sample_rate must be > 0");
    }
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(duration * sample_rate)));
    MotionTrajectory traj;
    traj.params.activity = ActivityClass::no_motion;
    traj.params.r0 = r0;
    traj.params.speed_peak = std::abs(v_r);
    traj.sample_rate = sample_rate;
    traj.t.resize(n);
    traj.r.resize(n);
    traj.v.assign(n, v_r);
    for (std::size_t k = 0; k < n; ++k) {
        traj.t[k] = static_cast<double>(k) / sample_rate;
        traj.r[k] = r0 - v_r * traj.t[k];
    }
    return traj;
}

std::vector<MotionParams> sample_population(ActivityClass c, Cohort cohort, std::size_t count, std::uint64_t seed)
{
    activity_from_id(class_id(c));
    if (count == 0) {
        throw DomainError("sample_population: count must be > 0");
    }
    const double spread = cohort == Cohort::trained ? 0.10 : 0.40;
    const double max_jitter = cohort == Cohort::trained ? 0.0 : 0.30;
    const auto nominal = nominal_params(c);
    const auto env = envelope(c);
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(class_id(c)), static_cast<std::uint64_t>(cohort)}));

    // Uniform over the intersection of the cohort band and the envelope.
    auto draw = [&](double centre, double lo, double hi) {
        const double a = std::max(centre * (1.0 - spread), lo);
        const double b = std::min(centre * (1.0 + spread), hi);
        return a < b ? rng.uniform(a, b) : std::clamp(centre, lo, hi);
    };

    std::vector<MotionParams> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        MotionParams p = nominal;
        p.seed = rng.next_u64();
        p.phase = rng.uniform(0.0, kTwoPi);
        if (c == ActivityClass::no_motion) {
            p.r0 = draw(nominal.r0, kStandoff, kMaxRange);
            out.push_back(p);
            continue;
        }
        const double speed_lo = env.speed_min_exclusive ? env.speed_min * 1.01 : env.speed_min;
        p.amplitude = draw(nominal.amplitude, env.extent_min / 2.0, env.extent_max / 2.0);
        p.speed_peak = draw(nominal.speed_peak, speed_lo, env.speed_max);
        p.jitter = max_jitter > 0.0 ? rng.uniform(0.0, max_jitter) : 0.0;
        p.rate = rate_for(c, p.amplitude, p.speed_peak);
        p.r0 = draw(nominal.r0, amplitude_cap(p) + kStandoff, kMaxRange - amplitude_cap(p));
        out.push_back(p);
    }
    return out;
}

// Files ------------------------------------------------------------------------

namespace {
constexpr char kTrajMagic[] = "HMDT";
constexpr std::uint16_t kTrajVersion = 1;
}  // namespace

void write_trajectory(const MotionTrajectory& traj, const std::filesystem::path& path)
{
    io::ByteWriter w;
    w.put_bytes(std::string_view(kTrajMagic, 4));
    w.put<std::uint16_t>(kTrajVersion);
    w.put<double>(traj.sample_rate);
    w.put<std::uint64_t>(traj.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(traj.params.activity));
    for (std::size_t k = 0; k < traj.size(); ++k) {
        w.put<double>(traj.r[k]);
        w.put<double>(traj.v[k]);
    }
    io::write_file(path, w.bytes());
}

MotionTrajectory read_trajectory(const std::filesystem::path& path)
{
    const auto bytes = io::read_file(path);
    io::ByteReader rd(bytes, "trajectory '" + path.string() + "'");
    if (rd.get_bytes(4) != std::string_view(kTrajMagic, 4)) {
        throw FormatError("'" + path.string() + "' is not an HMDT trajectory file");
    }
    const auto version = rd.get<std::uint16_t>();
    if (version != kTrajVersion) {
        throw FormatError("unsupported HMDT version " + std::to_string(version));
    }
    MotionTrajectory traj;
    traj.sample_rate = rd.get<double>();
    const auto n = rd.get<std::uint64_t>();
    traj.params.activity = activity_from_id(rd.get<std::uint8_t>());
    if (!(traj.sample_rate > 0.0) || n > rd.remaining() / 16) {
        throw FormatError("HMDT header inconsistent with payload in '" + path.string() + "'");
    }
    traj.t.resize(n);
    traj.r.resize(n);
    traj.v.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        traj.t[k] = static_cast<double>(k) / traj.sample_rate;
        traj.r[k] = rd.get<double>();
        traj.v[k] = rd.get<double>();
    }
    return traj;
}

void write_trajectory_csv(const MotionTrajectory& traj, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << "t,r,v\n";
    char line[96];
    for (std::size_t k = 0; k < traj.size(); ++k) {
        std::snprintf(line, sizeof line, "%.9g,%.12g,%.12g\n", traj.t[k], traj.r[k], traj.v[k]);
        out << line;
    }
}

}  // namespace harmodop::motion
