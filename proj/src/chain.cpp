// SPDX-License-Identifier: Apache-2.0
#include "harmodop/chain.hpp"

namespace harmodop::dsp {

WindowResult process_window(const BasebandSignal& window, const ChainConfig& cfg)
{
    WindowResult res;
    const std::size_t n = window.size();
    for (std::size_t k = 0; k < n; ++k) {
        res.received_power += window.i[k] * window.i[k] + window.q[k] * window.q[k];
    }
    res.received_power /= static_cast<double>(std::max<std::size_t>(n, 1));

    auto corrected = iq_correct(window, cfg.iq);
    FilterSpec lpf = cfg.lpf;
    lpf.sample_rate = window.sample_rate;
    const auto filter = butterworth_design(lpf);

    BasebandSignal clean;
    clean.sample_rate = window.sample_rate;
    clean.meta = corrected.meta;
    clean.i = filter.filter(detrend(corrected.i));
    clean.q = filter.filter(detrend(corrected.q));
    for (std::size_t k = 0; k < n; ++k) {
        res.motion_power += clean.i[k] * clean.i[k] + clean.q[k] * clean.q[k];
    }
    res.motion_power /= static_cast<double>(std::max<std::size_t>(n, 1));

    auto spec = threshold_dynamic_range(stft(clean, cfg.stft), cfg.range_db);
    res.image = to_image(spec, cfg.image_size, cfg.freq_span, cfg.binary_threshold);
    res.image.range_db = cfg.range_db;
    res.warnings = std::move(clean.meta.warnings);
    return res;
}

}  // namespace harmodop::dsp
