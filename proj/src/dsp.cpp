// SPDX-License-Identifier: Apache-2.0
#include "harmodop/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>

#include <fftw3.h>

#include "harmodop/binary_io.hpp"
#include "harmodop/error.hpp"

namespace harmodop::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// FFTW's planner is not re-entrant; plan execution is.
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

/// Owns an out-of-place complex FFT plan and its aligned buffers.
class FftPlan {
public:
    explicit FftPlan(std::size_t n) : n_(n)
    {
        in_ = fftw_alloc_complex(n);
        out_ = fftw_alloc_complex(n);
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    ~FftPlan()
    {
        {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    fftw_complex* in() noexcept { return in_; }
    const fftw_complex* out() const noexcept { return out_; }
    void execute() { fftw_execute(plan_); }

private:
    std::size_t n_;
    fftw_complex* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

double to_db(double magnitude)
{
    if (!(magnitude > 0.0)) {
        return kDbFloor;
    }
    return std::max(kDbFloor, 20.0 * std::log10(magnitude));
}

}  // namespace

// I/Q balance ------------------------------------------------------------------

BasebandSignal iq_correct(const BasebandSignal& sig, const IqCorrectOptions& opts)
{
    const std::size_t n = sig.size();
    if (n < 256) {
        throw DomainError("iq_correct: need >= 256 samples, got " + std::to_string(n));
    }
    if (sig.q.size() != n) {
        throw DomainError("iq_correct: I and Q lengths differ");
    }
    const double mi = std::accumulate(sig.i.begin(), sig.i.end(), 0.0) / static_cast<double>(n);
    const double mq = std::accumulate(sig.q.begin(), sig.q.end(), 0.0) / static_cast<double>(n);
    double pii = 0.0, pqq = 0.0, piq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double a = sig.i[k] - mi;
        const double b = sig.q[k] - mq;
        pii += a * a;
        pqq += b * b;
        piq += a * b;
    }

    BasebandSignal out = sig;
    if (pii <= 0.0 || pqq <= 0.0) {
        out.meta.warnings.emplace_back("iq_correct: degenerate (all-zero or constant) rail, passed through");
        return out;
    }
    const double rho = piq / std::sqrt(pii * pqq);
    const double gain = std::sqrt(pqq / pii);
    if (std::abs(gain - 1.0) < opts.deadband && std::abs(rho) < opts.deadband) {
        return out;
    }
    const double coupling = piq / pii;
    const double residual = pqq - coupling * piq;
    if (!(residual > 0.0)) {
        out.meta.warnings.emplace_back("iq_correct: rails fully correlated, passed through");
        return out;
    }
    const double scale = std::sqrt(pii / residual);
    for (std::size_t k = 0; k < n; ++k) {
        out.q[k] = mq + scale * ((sig.q[k] - mq) - coupling * (sig.i[k] - mi));
    }
    return out;
}

std::vector<double> detrend(std::span<const double> samples)
{
    const std::size_t n = samples.size();
    if (n < 2) {
        throw DomainError("detrend: need >= 2 samples");
    }
    const double centre = 0.5 * static_cast<double>(n - 1);
    double mean = 0.0;
    for (double y : samples) {
        mean += y;
    }
    mean /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = static_cast<double>(k) - centre;
        sxy += x * (samples[k] - mean);
        sxx += x * x;
    }
    const double slope = sxy / sxx;
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = samples[k] - mean - slope * (static_cast<double>(k) - centre);
    }
    return out;
}

// Butterworth ------------------------------------------------------------------

std::complex<double> BiquadCascade::response(double f, double fs) const
{
    const std::complex<double> z1 = std::polar(1.0, -2.0 * kPi * f / fs);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : sections_) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return h;
}

std::vector<double> BiquadCascade::filter(std::span<const double> x) const
{
    std::vector<double> y(x.begin(), x.end());
    for (const auto& s : sections_) {
        double z1 = 0.0, z2 = 0.0;
        for (double& v : y) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
    return y;
}

BiquadCascade butterworth_design(const FilterSpec& spec)
{
    if (spec.order < 1) {
        throw DomainError("butterworth_design: order must be >= 1");
    }
    if (!(spec.sample_rate > 0.0)) {
        throw DomainError("butterworth_design: sample_rate must be > 0");
    }
    const double nyquist = spec.sample_rate / 2.0;
    if (!(spec.cutoff > 0.0) || !(spec.cutoff < nyquist)) {
        throw DomainError("butterworth_design: cutoff " + std::to_string(spec.cutoff) + " Hz outside (0, " +
                          std::to_string(nyquist) + ") Hz");
    }
    // Prewarped analog cutoff, normalized by 2*fs.
    const double k = std::tan(kPi * spec.cutoff / spec.sample_rate);
    const double k2 = k * k;
    std::vector<Biquad> sections;
    const int n = spec.order;
    for (int p = 0; p < n / 2; ++p) {
        // Prototype pole pair -sin(theta) +- j cos(theta): s^2 + 2 zeta s + 1.
        const double theta = kPi * (2.0 * p + 1.0) / (2.0 * n);
        const double zeta = std::sin(theta);
        const double norm = 1.0 / (1.0 + 2.0 * zeta * k + k2);
        Biquad s;
        s.b0 = k2 * norm;
        s.b1 = 2.0 * s.b0;
        s.b2 = s.b0;
        s.a1 = 2.0 * (k2 - 1.0) * norm;
        s.a2 = (1.0 - 2.0 * zeta * k + k2) * norm;
        sections.push_back(s);
    }
    if (n % 2 == 1) {
        const double norm = 1.0 / (1.0 + k);
        Biquad s;
        s.b0 = k * norm;
        s.b1 = s.b0;
        s.b2 = 0.0;
        s.a1 = (k - 1.0) * norm;
        s.a2 = 0.0;
        sections.push_back(s);
    }
    return BiquadCascade(std::move(sections));
}

// STFT -------------------------------------------------------------------------

void validate(const StftSpec& spec)
{
    if (!(spec.hop > 0 && spec.hop <= spec.window_len && spec.window_len <= spec.fft_len)) {
        throw DomainError("StftSpec requires 0 < hop <= window_len <= fft_len (got hop " + std::to_string(spec.hop) +
                          ", window " + std::to_string(spec.window_len) + ", fft " + std::to_string(spec.fft_len) +
                          ")");
    }
}

std::vector<double> make_window(Taper taper, std::size_t n)
{
    std::vector<double> w(n, 1.0);
    if (n < 2) {
        return w;
    }
    // Periodic (DFT-even) tapers.
    for (std::size_t k = 0; k < n; ++k) {
        const double x = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
        switch (taper) {
        case Taper::hann: w[k] = 0.5 - 0.5 * std::cos(x); break;
        case Taper::hamming: w[k] = 0.54 - 0.46 * std::cos(x); break;
        case Taper::rectangular: break;
        }
    }
    return w;
}

Taper taper_from_string(const std::string& name)
{
    if (name == "hann") return Taper::hann;
    if (name == "hamming") return Taper::hamming;
    if (name == "rectangular" || name == "rect") return Taper::rectangular;
    throw DomainError("unknown window taper '" + name + "'");
}

std::string to_string(Taper taper)
{
    switch (taper) {
    case Taper::hann: return "hann";
    case Taper::hamming: return "hamming";
    case Taper::rectangular: return "rectangular";
    }
    return "unknown";
}

Spectrogram stft(const BasebandSignal& sig, const StftSpec& spec)
{
    validate(spec);
    if (!(sig.sample_rate > 0.0)) {
        throw DomainError("stft: sample_rate must be > 0");
    }
    if (sig.size() < spec.window_len) {
        throw DomainError("stft: signal of " + std::to_string(sig.size()) + " samples shorter than window of " +
                          std::to_string(spec.window_len));
    }
    const std::size_t m = spec.fft_len;
    const std::size_t frames = 1 + (sig.size() - spec.window_len) / spec.hop;
    const std::size_t half = m / 2;
    const auto window = make_window(spec.window, spec.window_len);

    Spectrogram out;
    out.n_freq = m;
    out.n_time = frames;
    out.mag_db.resize(m * frames);
    out.freqs.resize(m);
    out.times.resize(frames);
    for (std::size_t k = 0; k < m; ++k) {
        out.freqs[k] = (static_cast<double>(k) - static_cast<double>(half)) * sig.sample_rate / static_cast<double>(m);
    }

    FftPlan plan(m);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * spec.hop;
        out.times[t] = (static_cast<double>(start) + 0.5 * static_cast<double>(spec.window_len)) / sig.sample_rate;
        auto* in = plan.in();
        for (std::size_t k = 0; k < m; ++k) {
            if (k < spec.window_len) {
                in[k][0] = window[k] * sig.i[start + k];
                in[k][1] = window[k] * sig.q[start + k];
            } else {
                in[k][0] = 0.0;
                in[k][1] = 0.0;
            }
        }
        plan.execute();
        const auto* res = plan.out();
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t src = (k + m - half) % m;
            out.at(k, t) = to_db(std::hypot(res[src][0], res[src][1]));
        }
    }
    return out;
}

Spectrogram threshold_dynamic_range(const Spectrogram& spec, double range_db)
{
    if (!(range_db > 0.0)) {
        throw DomainError("threshold_dynamic_range: range_db must be > 0");
    }
    Spectrogram out = spec;
    if (out.mag_db.empty()) {
        return out;
    }
    const double top = *std::max_element(out.mag_db.begin(), out.mag_db.end());
    const double floor = top - range_db;
    for (double& v : out.mag_db) {
        v = std::max(v, floor);
    }
    return out;
}

// Images -----------------------------------------------------------------------

SpectrogramImage to_image(const Spectrogram& spec, std::size_t n, double freq_span, std::optional<double> binary_threshold)
{
    if (n < 16) {
        throw DomainError("to_image: n must be >= 16, got " + std::to_string(n));
    }
    if (spec.n_freq < 2 || spec.n_time < 1) {
        throw DomainError("to_image: spectrogram too small");
    }
    const double axis_span = spec.freqs.back() - spec.freqs.front();
    if (!(freq_span > 0.0) || freq_span > axis_span) {
        throw DomainError("to_image: freq_span " + std::to_string(freq_span) + " Hz exceeds axis span " +
                          std::to_string(axis_span) + " Hz");
    }
    const auto [lo_it, hi_it] = std::minmax_element(spec.mag_db.begin(), spec.mag_db.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;

    const double f0 = spec.freqs.front();
    const double df = spec.bin_width();
    const double last_f = static_cast<double>(spec.n_freq - 1);
    const double last_t = static_cast<double>(spec.n_time - 1);

    SpectrogramImage img;
    img.n = n;
    img.pixels.resize(n * n);
    img.binary_threshold = binary_threshold;
    // Frames start at sample 0, so the first centre is half a window in.
    img.window_seconds = spec.times.empty() ? 0.0 : spec.times.back() + spec.times.front();

    for (std::size_t row = 0; row < n; ++row) {
        const double f = freq_span / 2.0 - (static_cast<double>(row) + 0.5) * freq_span / static_cast<double>(n);
        const double fpos = std::clamp((f - f0) / df, 0.0, last_f);
        const auto f_lo = static_cast<std::size_t>(std::floor(fpos));
        const std::size_t f_hi = std::min(f_lo + 1, spec.n_freq - 1);
        const double wf = fpos - static_cast<double>(f_lo);
        for (std::size_t col = 0; col < n; ++col) {
            const double tpos = std::clamp(
                (static_cast<double>(col) + 0.5) * static_cast<double>(spec.n_time) / static_cast<double>(n) - 0.5,
                0.0, last_t);
            const auto t_lo = static_cast<std::size_t>(std::floor(tpos));
            const std::size_t t_hi = std::min(t_lo + 1, spec.n_time - 1);
            const double wt = tpos - static_cast<double>(t_lo);
            const double v = (1.0 - wf) * ((1.0 - wt) * spec.at(f_lo, t_lo) + wt * spec.at(f_lo, t_hi)) +
                             wf * ((1.0 - wt) * spec.at(f_hi, t_lo) + wt * spec.at(f_hi, t_hi));
            double unit = range > 0.0 ? std::clamp((v - lo) / range, 0.0, 1.0) : 0.0;
            const double level = std::round(unit * 255.0);
            unit = level / 255.0;
            if (binary_threshold) {
                unit = unit >= *binary_threshold ? 1.0 : 0.0;
            }
            img.pixels[row * n + col] = unit;
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_pgm(const SpectrogramImage& image)
{
    const std::string header = "P5\n" + std::to_string(image.n) + " " + std::to_string(image.n) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(header.size() + image.pixels.size());
    for (double p : image.pixels) {
        bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)));
    }
    return bytes;
}

void write_pgm(const SpectrogramImage& image, const std::filesystem::path& path)
{
    io::write_file(path, encode_pgm(image));
}

SpectrogramImage read_pgm(const std::filesystem::path& path)
{
    return decode_pgm(io::read_file(path), path.string());
}

SpectrogramImage decode_pgm(std::span<const std::uint8_t> bytes, const std::string& name)
{
    std::size_t pos = 0;
    auto fail = [&](const std::string& why) -> FormatError {
        return FormatError("PGM '" + name + "': " + why);
    };
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space();
        long v = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1'000'000) {
                throw fail("header value too large");
            }
            ++pos;
        }
        if (pos == start) {
            throw fail("malformed header");
        }
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw fail("not a binary (P5) PGM");
    }
    pos = 2;
    const long width = read_int();
    const long height = read_int();
    const long maxval = read_int();
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw fail("malformed header");
    }
    ++pos;
    if (width <= 0 || width != height) {
        throw fail("expected a square image, got " + std::to_string(width) + "x" + std::to_string(height));
    }
    if (maxval <= 0 || maxval > 255) {
        throw fail("only 8-bit maxval supported");
    }
    const auto n = static_cast<std::size_t>(width);
    if (bytes.size() - pos < n * n) {
        throw fail("truncated pixel data (" + std::to_string(bytes.size() - pos) + " of " + std::to_string(n * n) +
                   " bytes)");
    }
    SpectrogramImage img;
    img.n = n;
    img.pixels.resize(n * n);
    for (std::size_t k = 0; k < n * n; ++k) {
        const double level = std::round(static_cast<double>(bytes[pos + k]) * 255.0 / static_cast<double>(maxval));
        img.pixels[k] = level / 255.0;
    }
    return img;
}

void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    char buf[64];
    out << "freq_hz\\time_s";
    for (double t : spec.times) {
        std::snprintf(buf, sizeof buf, ",%.6g", t);
        out << buf;
    }
    out << '\n';
    for (std::size_t f = 0; f < spec.n_freq; ++f) {
        std::snprintf(buf, sizeof buf, "%.6g", spec.freqs[f]);
        out << buf;
        for (std::size_t t = 0; t < spec.n_time; ++t) {
            std::snprintf(buf, sizeof buf, ",%.4f", spec.at(f, t));
            out << buf;
        }
        out << '\n';
    }
}

// Adaptive baseline ------------------------------------------------------------

AdaptiveBaseline::AdaptiveBaseline(std::size_t history, std::size_t update_every, double margin, double default_floor)
    : history_(std::max<std::size_t>(history, 1)),
      update_every_(std::max<std::size_t>(update_every, 1)),
      margin_(margin),
      threshold_(default_floor)
{
}

void AdaptiveBaseline::push(double power)
{
    window_.push_back(power);
    if (window_.size() > history_) {
        window_.pop_front();
    }
    ++count_;
    // The first measurement bootstraps the level; after that it moves only
    // on multiples of update_every.
    if (updates_ == 0 || count_ % update_every_ == 0) {
        std::vector<double> sorted(window_.begin(), window_.end());
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        const double median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        threshold_ = median * margin_;
        ++updates_;
    }
}

}  // namespace harmodop::dsp
