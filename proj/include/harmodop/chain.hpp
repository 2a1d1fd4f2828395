// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "harmodop/dsp.hpp"

namespace harmodop::dsp {

/// Everything between a raw I/Q window and the classifier input.
struct ChainConfig {
    IqCorrectOptions iq;
    FilterSpec lpf;  // sample_rate is taken from the signal
    StftSpec stft;
    double range_db = 40.0;
    double freq_span = 300.0;  // Hz, centred on zero Doppler
    std::size_t image_size = 64;
    std::optional<double> binary_threshold;
};

struct WindowResult {
    SpectrogramImage image;
    double received_power = 0.0;  // mean |x|^2 of the raw window
    double motion_power = 0.0;    // mean |x|^2 after detrend and low-pass
    std::vector<std::string> warnings;
};

/// I/Q correction, per-rail detrend, Butterworth low-pass, STFT, dynamic
/// range clip, and image conversion.
WindowResult process_window(const BasebandSignal& window, const ChainConfig& cfg);

}  // namespace harmodop::dsp
