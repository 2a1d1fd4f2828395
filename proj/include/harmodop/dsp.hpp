// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "harmodop/channel.hpp"

namespace harmodop::dsp {

using channel::BasebandSignal;

// I/Q balance ------------------------------------------------------------------

struct IqCorrectOptions {
    // Estimated imbalances below this (|gain - 1| and |rho|) are treated as
    // estimator noise and the stream is passed through untouched.
    double deadband = 5e-3;
};

/// Gram-Schmidt quadrature correction: Q is decorrelated from I and
/// rescaled to the RMS of I. Statistics are taken about the mean so DC
/// offsets do not bias the estimate.
BasebandSignal iq_correct(const BasebandSignal& sig, const IqCorrectOptions& opts = {});

/// Least-squares line removal.
std::vector<double> detrend(std::span<const double> samples);

// Butterworth ------------------------------------------------------------------

struct FilterSpec {
    int order = 5;
    double cutoff = 150.0;  // Hz
    double sample_rate = 2500.0;
};

/// One second-order section, a0 normalized to 1.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

class BiquadCascade {
public:
    BiquadCascade() = default;
    explicit BiquadCascade(std::vector<Biquad> sections) : sections_(std::move(sections)) {}

    const std::vector<Biquad>& sections() const noexcept { return sections_; }

    /// Frequency response at f (Hz) for sample rate fs.
    std::complex<double> response(double f, double fs) const;

    /// Causal filtering from zero initial state (transposed direct form II).
    std::vector<double> filter(std::span<const double> x) const;

private:
    std::vector<Biquad> sections_;
};

/// Low-pass Butterworth via the bilinear transform, prewarped at the cutoff.
/// Odd orders end with a first-order section stored as a biquad (b2 = a2 = 0).
BiquadCascade butterworth_design(const FilterSpec& spec);

// STFT -------------------------------------------------------------------------

enum class Taper { hann, hamming, rectangular };

struct StftSpec {
    std::size_t window_len = 256;
    std::size_t hop = 64;
    std::size_t fft_len = 512;
    Taper window = Taper::hann;
};

void validate(const StftSpec& spec);
std::vector<double> make_window(Taper taper, std::size_t n);
Taper taper_from_string(const std::string& name);
std::string to_string(Taper taper);

inline constexpr double kDbFloor = -120.0;

/// Magnitude spectrogram in dB, frequency-major: value(f, t) = mag_db[f * n_time + t].
struct Spectrogram {
    std::size_t n_freq = 0;
    std::size_t n_time = 0;
    std::vector<double> mag_db;
    std::vector<double> freqs;  // two-sided, strictly increasing (Hz)
    std::vector<double> times;  // frame centres (s)

    double at(std::size_t f, std::size_t t) const { return mag_db[f * n_time + t]; }
    double& at(std::size_t f, std::size_t t) { return mag_db[f * n_time + t]; }
    double bin_width() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

/// Two-sided STFT of the complex stream i + jq; negative frequencies are receding.
Spectrogram stft(const BasebandSignal& sig, const StftSpec& spec);

/// Clip to [max - range_db, max].
Spectrogram threshold_dynamic_range(const Spectrogram& spec, double range_db);

// Images -----------------------------------------------------------------------

/// N x N image, row 0 at +freq_span/2. Pixels hold 8-bit levels k/255 so
/// PGM storage is lossless.
struct SpectrogramImage {
    std::size_t n = 0;
    std::vector<double> pixels;  // row-major
    double window_seconds = 0.0;
    std::optional<double> range_db;
    std::optional<double> binary_threshold;

    double at(std::size_t row, std::size_t col) const { return pixels[row * n + col]; }
};

SpectrogramImage to_image(const Spectrogram& spec, std::size_t n, double freq_span,
                          std::optional<double> binary_threshold = std::nullopt);

/// P5 8-bit PGM.
void write_pgm(const SpectrogramImage& image, const std::filesystem::path& path);
SpectrogramImage read_pgm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const SpectrogramImage& image);
/// `name` only labels error messages.
SpectrogramImage decode_pgm(std::span<const std::uint8_t> bytes, const std::string& name);

/// CSV debug dump: header row of frame times, then one row per frequency bin.
void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path);

// Adaptive baseline ------------------------------------------------------------

/// Received-power level used to separate "tag moving" from "nothing
/// happening". Recomputed as median(last `history` entries) * margin every
/// `update_every` measurements and held constant in between. Single owner.
class AdaptiveBaseline {
public:
    AdaptiveBaseline(std::size_t history = 10, std::size_t update_every = 10, double margin = 0.05,
                     double default_floor = 0.0);

    void push(double power);
    double threshold() const noexcept { return threshold_; }
    std::size_t count() const noexcept { return count_; }
    std::size_t updates() const noexcept { return updates_; }

private:
    std::size_t history_;
    std::size_t update_every_;
    double margin_;
    double threshold_;
    std::deque<double> window_;
    std::size_t count_ = 0;
    std::size_t updates_ = 0;
};

}  // namespace harmodop::dsp
