// SPDX-License-Identifier: Apache-2.0
#include "harmodop/channel.hpp"

#include <algorithm>
#include <numbers>

#include "harmodop/binary_io.hpp"
#include "harmodop/error.hpp"
#include "harmodop/rng.hpp"

namespace harmodop::channel {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr char kIqMagic[] = "HMIQ";
constexpr std::uint16_t kIqVersion = 1;

/// Resample r(t) onto the radar grid by linear interpolation.
std::vector<double> resample_range(const motion::MotionTrajectory& traj, double fs, std::size_t& n_out)
{
    if (traj.sample_rate == fs) {
        n_out = traj.size();
        return traj.r;
    }
    const double duration = static_cast<double>(traj.size() - 1) / traj.sample_rate;
    n_out = static_cast<std::size_t>(std::floor(duration * fs)) + 1;
    std::vector<double> out(n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
        const double pos = static_cast<double>(k) / fs * traj.sample_rate;
        const auto idx = std::min(static_cast<std::size_t>(pos), traj.size() - 1);
        const double frac = pos - static_cast<double>(idx);
        const double next = traj.r[std::min(idx + 1, traj.size() - 1)];
        out[k] = traj.r[idx] + (next - traj.r[idx]) * frac;
    }
    return out;
}

}  // namespace

void validate(const TagConfig& tag)
{
    if (!(tag.epsilon_n >= 0.0 && tag.epsilon_n <= 1.0)) {
        throw DomainError("tag epsilon_n must lie in [0, 1], got " + std::to_string(tag.epsilon_n));
    }
    if (!(tag.bandwidth > 0.0)) {
        throw DomainError("tag bandwidth must be > 0");
    }
    if (tag.harmonic_n < 2) {
        throw DomainError("tag harmonic_n must be >= 2, got " + std::to_string(tag.harmonic_n));
    }
    if (!(tag.f_resonance > 0.0) || !(tag.g_tag_1 >= 0.0) || !(tag.g_tag_n >= 0.0)) {
        throw DomainError("tag resonance and gains must be positive");
    }
}

void validate(const RadarConfig& radar)
{
    if (!(radar.f1 > 0.0)) {
        throw DomainError("radar f1 must be > 0");
    }
    if (!(radar.p_t1 > 0.0)) {
        throw DomainError("radar p_t1 must be > 0");
    }
    if (!(radar.sample_rate > 0.0)) {
        throw DomainError("radar sample_rate must be > 0");
    }
    if (!(radar.reference_range > 0.0)) {
        throw DomainError("radar reference_range must be > 0");
    }
    if (radar.noise_floor && !(*radar.noise_floor >= 0.0)) {
        throw DomainError("radar noise_floor must be >= 0");
    }
    if (radar.full_scale && !(*radar.full_scale > 0.0)) {
        throw DomainError("radar full_scale must be > 0");
    }
}

void validate(const ImpairmentConfig& imp)
{
    if (!(imp.iq_gain_imbalance > 0.0)) {
        throw DomainError("iq_gain_imbalance must be > 0");
    }
}

double harmonic_doppler(double v_r, int n, double f1)
{
    return 2.0 * n * f1 * v_r / kSpeedOfLight;
}

double harmonic_rcs(const TagConfig& tag, double f1)
{
    const double lambda1 = kSpeedOfLight / f1;
    return tag.epsilon_n * lambda1 * lambda1 / (4.0 * kPi) * tag.g_tag_1 * tag.g_tag_n;
}

double received_power(const RadarConfig& radar, const TagConfig& tag, double r)
{
    if (!(r > 0.0)) {
        throw DomainError("received_power: range must be > 0, got " + std::to_string(r));
    }
    const double lambda_n = kSpeedOfLight / (tag.harmonic_n * radar.f1);
    const double four_pi = 4.0 * kPi;
    const double r2 = r * r;
    return radar.p_t1 * radar.g_t1 * radar.g_rn * lambda_n * lambda_n * harmonic_rcs(tag, radar.f1) /
           (four_pi * four_pi * four_pi * r2 * r2);
}

double resonance_gate(const TagConfig& tag, double f_tx)
{
    const double x = 2.0 * (f_tx - tag.f_resonance) / tag.bandwidth;
    const double x2 = x * x;
    return 1.0 / std::sqrt(1.0 + 9.0 * x2 * x2);
}

Calibration calibrate(const RadarConfig& radar, const TagConfig& tag)
{
    const double gate = resonance_gate(tag, radar.f1);
    const double p_ref = received_power(radar, tag, radar.reference_range) * gate * gate;
    Calibration cal;
    if (radar.full_scale) {
        cal.full_scale = *radar.full_scale;
    } else if (p_ref > 0.0) {
        cal.full_scale = radar.reference_amplitude / std::sqrt(p_ref);
    } else {
        cal.full_scale = 1.0;
    }
    cal.noise_floor = radar.noise_floor ? *radar.noise_floor : p_ref / db_to_linear(radar.nominal_snr_db);
    return cal;
}

BasebandSignal synthesize(const motion::MotionTrajectory& traj, const RadarConfig& radar, const TagConfig& tag,
                          const ImpairmentConfig& imp, std::uint64_t seed)
{
    validate(radar);
    validate(tag);
    validate(imp);
    if (traj.size() == 0 || !(traj.sample_rate > 0.0)) {
        throw DomainError("synthesize: empty trajectory");
    }
    for (std::size_t k = 0; k < traj.size(); ++k) {
        if (!(traj.r[k] > 0.0)) {
            throw DomainError("synthesize: trajectory range must stay > 0 (r[" + std::to_string(k) +
                              "] = " + std::to_string(traj.r[k]) + ")");
        }
    }

    const double fs = radar.sample_rate;
    std::size_t n = 0;
    const auto r = resample_range(traj, fs, n);
    const auto cal = calibrate(radar, tag);
    const double gate = resonance_gate(tag, radar.f1);
    const double cycles_per_metre = 2.0 * tag.harmonic_n * radar.f1 / kSpeedOfLight;

    BasebandSignal sig;
    sig.sample_rate = fs;
    sig.i.resize(n);
    sig.q.resize(n);
    sig.meta.source = "synthesized";
    sig.meta.seed = seed;
    sig.meta.class_id = motion::class_id(traj.params.activity);

    const double b_const = cal.full_scale * gate * std::sqrt(received_power(radar, tag, r[0]));
    double signal_power = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double b =
            radar.constant_amplitude ? b_const : cal.full_scale * gate * std::sqrt(received_power(radar, tag, r[k]));
        // Reduce the phase in cycles first; the raw phase is hundreds of radians.
        const double cycles = cycles_per_metre * r[k];
        const double phi = 2.0 * kPi * (cycles - std::floor(cycles));
        sig.i[k] = b * std::cos(phi);
        sig.q[k] = -b * std::sin(phi);
        signal_power += b * b;
    }
    signal_power /= static_cast<double>(n);

    double noise_power = cal.full_scale * cal.full_scale * cal.noise_floor;
    if (radar.snr_override_db) {
        noise_power = signal_power / db_to_linear(*radar.snr_override_db);
    }
    if (noise_power > 0.0) {
        Rng rng(seed);
        const double sigma = std::sqrt(noise_power / 2.0);
        for (std::size_t k = 0; k < n; ++k) {
            sig.i[k] += sigma * rng.normal();
            sig.q[k] += sigma * rng.normal();
        }
    }

    const double ce = std::cos(imp.iq_phase_error);
    const double se = std::sin(imp.iq_phase_error);
    const bool skew = imp.iq_gain_imbalance != 1.0 || imp.iq_phase_error != 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (skew) {
            sig.q[k] = imp.iq_gain_imbalance * (sig.q[k] * ce + sig.i[k] * se);
        }
        const double t = static_cast<double>(k) / fs;
        sig.i[k] += imp.dc_offset_i + imp.drift_slope * t;
        sig.q[k] += imp.dc_offset_q + imp.drift_slope * t;
    }
    return sig;
}

void write_baseband(const BasebandSignal& sig, const std::filesystem::path& path)
{
    io::ByteWriter w;
    w.put_bytes(std::string_view(kIqMagic, 4));
    w.put<std::uint16_t>(kIqVersion);
    w.put<double>(sig.sample_rate);
    w.put<std::uint64_t>(sig.size());
    for (std::size_t k = 0; k < sig.size(); ++k) {
        w.put<float>(static_cast<float>(sig.i[k]));
        w.put<float>(static_cast<float>(sig.q[k]));
    }
    io::write_file(path, w.bytes());
}

BasebandSignal read_baseband(const std::filesystem::path& path)
{
    const auto bytes = io::read_file(path);
    io::ByteReader rd(bytes, "baseband '" + path.string() + "'");
    if (rd.get_bytes(4) != std::string_view(kIqMagic, 4)) {
        throw FormatError("'" + path.string() + "' is not an HMIQ baseband file");
    }
    const auto version = rd.get<std::uint16_t>();
    if (version != kIqVersion) {
        throw FormatError("unsupported HMIQ version " + std::to_string(version));
    }
    BasebandSignal sig;
    sig.sample_rate = rd.get<double>();
    const auto n = rd.get<std::uint64_t>();
    if (!(sig.sample_rate > 0.0) || !std::isfinite(sig.sample_rate)) {
        throw FormatError("HMIQ sample rate invalid in '" + path.string() + "'");
    }
    if (n > rd.remaining() / 8) {
        throw FormatError("HMIQ '" + path.string() + "' truncated: header declares " + std::to_string(n) +
                          " samples, payload holds " + std::to_string(rd.remaining() / 8));
    }
    sig.i.resize(n);
    sig.q.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        sig.i[k] = rd.get<float>();
        sig.q[k] = rd.get<float>();
    }
    sig.meta.source = path.string();
    return sig;
}

}  // namespace harmodop::channel
