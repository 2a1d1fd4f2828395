// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "harmodop/motion.hpp"

namespace harmodop::channel {

inline constexpr double kSpeedOfLight = 299792458.0;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }
inline double dbm_to_watts(double dbm) { return 1e-3 * db_to_linear(dbm); }

/// Harmonic tag: narrow-band split ring at the fundamental, diode, and a
/// dipole at the harmonic. Defaults are the measured 2.39 GHz tag.
struct TagConfig {
    double f_resonance = 2.39e9;   // Hz
    double bandwidth = 11e6;       // -10 dB S11 bandwidth, Hz
    double epsilon_n = 0.016;      // conversion efficiency
    double g_tag_1 = 1.6218100973589298;  // 2.1 dBi ring
    double g_tag_n = 1.6405897731995392;  // 2.15 dBi dipole (assumed)
    int harmonic_n = 2;
};

void validate(const TagConfig& tag);

/// CW harmonic radar. `full_scale` maps sqrt(W) of received power to ADC
/// volts; `noise_floor` is the receiver noise power referred to baseband (W).
/// Leaving either unset calibrates it so that a tag at `reference_range`
/// lands at amplitude 0.5 with `nominal_snr_db`.
struct RadarConfig {
    double f1 = 2.4e9;                 // Hz
    double p_t1 = 3.1622776601683795;  // W (6 dBm LO + 29 dB amplifier)
    double g_t1 = 6.309573444801933;   // 8 dBi log-periodic
    double g_rn = 6.309573444801933;   // 8 dBi log-periodic
    double sample_rate = 2500.0;       // Sa/s
    std::optional<double> snr_override_db;
    std::optional<double> noise_floor;  // W
    std::optional<double> full_scale;   // V / sqrt(W)
    double reference_range = 1.0;       // m
    double nominal_snr_db = 16.0;
    double reference_amplitude = 0.5;   // V
    bool constant_amplitude = false;    // hold B at its value for r(0)
};

void validate(const RadarConfig& radar);

struct ImpairmentConfig {
    double iq_gain_imbalance = 1.0;  // Q gain / I gain
    double iq_phase_error = 0.0;     // rad
    double dc_offset_i = 0.0;        // V
    double dc_offset_q = 0.0;        // V
    double drift_slope = 0.0;        // V/s, applied to both rails
};

void validate(const ImpairmentConfig& imp);

struct SignalMeta {
    std::string source;
    std::uint64_t seed = 0;
    int class_id = 0;
    std::vector<std::string> warnings;
};

/// Complex baseband I/Q stream.
struct BasebandSignal {
    std::vector<double> i;  // V
    std::vector<double> q;  // V
    double sample_rate = 0.0;
    SignalMeta meta;

    std::size_t size() const noexcept { return i.size(); }
    double duration() const noexcept { return static_cast<double>(i.size()) / sample_rate; }
};

/// Harmonic Doppler shift 2*n*f1*v/c (Hz); positive v approaches the radar.
double harmonic_doppler(double v_r, int n, double f1);

/// Harmonic scattering cross section eps_n * lambda_1^2 / (4 pi) * G_tag,1 * G_tag,n (m^2).
double harmonic_rcs(const TagConfig& tag, double f1);

/// Harmonic radar range equation (W) at range r.
double received_power(const RadarConfig& radar, const TagConfig& tag, double r);

/// Amplitude response of the ring resonance at transmit frequency f_tx:
/// 1 / sqrt(1 + 9 x^4), x = 2 (f_tx - f_res) / bandwidth, which is -10 dB at the band edges.
double resonance_gate(const TagConfig& tag, double f_tx);

/// Resolved ADC scale and noise power for a radar/tag pair.
struct Calibration {
    double full_scale = 0.0;  // V / sqrt(W)
    double noise_floor = 0.0; // W
};

Calibration calibrate(const RadarConfig& radar, const TagConfig& tag);

/// Baseband return for a trajectory: B(t) exp(-j 2 pi n f1 2 r(t) / c),
/// then AWGN, I/Q imbalance, DC offset and drift.
BasebandSignal synthesize(const motion::MotionTrajectory& traj, const RadarConfig& radar, const TagConfig& tag,
                          const ImpairmentConfig& imp, std::uint64_t seed);

/// "HMIQ" binary: magic, u16 version, f64 sample rate, u64 length, then
/// interleaved (i, q) f32 pairs, little-endian.
void write_baseband(const BasebandSignal& sig, const std::filesystem::path& path);
BasebandSignal read_baseband(const std::filesystem::path& path);

}  // namespace harmodop::channel
