// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "harmodop/chain.hpp"
#include "harmodop/channel.hpp"
#include "harmodop/dsp.hpp"
#include "harmodop/error.hpp"
#include "harmodop/motion.hpp"
#include "harmodop/rng.hpp"
#include "test_util.hpp"

using namespace harmodop;
using namespace harmodop::dsp;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFs = 2500.0;

BasebandSignal tone(double hz, std::size_t n, double amp = 1.0)
{
    BasebandSignal s;
    s.sample_rate = kFs;
    s.i.resize(n);
    s.q.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double ph = 2.0 * kPi * hz * static_cast<double>(k) / kFs;
        s.i[k] = amp * std::cos(ph);
        s.q[k] = amp * std::sin(ph);
    }
    return s;
}

/// Same skew model as the channel: Q' = g (Q cos e + I sin e).
BasebandSignal skew(BasebandSignal s, double gain, double phase)
{
    for (std::size_t k = 0; k < s.size(); ++k) {
        s.q[k] = gain * (s.q[k] * std::cos(phase) + s.i[k] * std::sin(phase));
    }
    return s;
}

double db(double x) { return 10.0 * std::log10(x); }

/// Analytic Butterworth magnitude^2 with the bilinear frequency warp.
double analytic_gain2(double f, double fc, double fs, int order)
{
    const double ratio = std::tan(kPi * f / fs) / std::tan(kPi * fc / fs);
    return 1.0 / (1.0 + std::pow(ratio, 2.0 * order));
}

Spectrogram synthetic_spectrogram(std::size_t nf, std::size_t nt, double fs_axis)
{
    Spectrogram s;
    s.n_freq = nf;
    s.n_time = nt;
    s.mag_db.assign(nf * nt, 0.0);
    for (std::size_t k = 0; k < nf; ++k) {
        s.freqs.push_back((static_cast<double>(k) - static_cast<double>(nf / 2)) * fs_axis / static_cast<double>(nf));
    }
    for (std::size_t t = 0; t < nt; ++t) {
        s.times.push_back(0.05 + 0.025 * static_cast<double>(t));
    }
    return s;
}

}  // namespace

// I/Q correction ---------------------------------------------------------------

TEST(IqCorrect, RejectsImageToneBy40Db)
{
    const auto clean = tone(30.0, 2500);
    const auto bad = skew(clean, 1.2, 0.1);
    const auto before_sig = std::norm(test::dft_at(bad.i, bad.q, kFs, 30.0));
    const auto before_img = std::norm(test::dft_at(bad.i, bad.q, kFs, -30.0));
    EXPECT_LT(db(before_sig / before_img), 25.0);

    const auto fixed = iq_correct(bad);
    const auto after_sig = std::norm(test::dft_at(fixed.i, fixed.q, kFs, 30.0));
    const auto after_img = std::norm(test::dft_at(fixed.i, fixed.q, kFs, -30.0));
    EXPECT_GE(db(after_sig / after_img), 40.0);
}

TEST(IqCorrect, BalancesRmsAndDecorrelatesRails)
{
    Rng rng(3);
    auto s = tone(17.0, 4000);
    for (std::size_t k = 0; k < s.size(); ++k) {
        s.i[k] += 0.1 * rng.normal() + 0.3;
        s.q[k] += 0.1 * rng.normal() - 0.2;
    }
    const auto fixed = iq_correct(skew(s, 0.8, -0.15));
    const double n = static_cast<double>(fixed.size());
    const double mi = std::accumulate(fixed.i.begin(), fixed.i.end(), 0.0) / n;
    const double mq = std::accumulate(fixed.q.begin(), fixed.q.end(), 0.0) / n;
    double pii = 0.0, pqq = 0.0, piq = 0.0;
    for (std::size_t k = 0; k < fixed.size(); ++k) {
        pii += (fixed.i[k] - mi) * (fixed.i[k] - mi);
        pqq += (fixed.q[k] - mq) * (fixed.q[k] - mq);
        piq += (fixed.i[k] - mi) * (fixed.q[k] - mq);
    }
    EXPECT_NEAR(std::sqrt(pqq / pii), 1.0, 1e-3);
    EXPECT_LT(std::abs(piq / std::sqrt(pii * pqq)), 1e-3);
}

TEST(IqCorrect, BalancedInputPassesThrough)
{
    const auto clean = tone(25.0, 2500, 0.7);
    const auto out = iq_correct(clean);
    for (std::size_t k = 0; k < clean.size(); ++k) {
        ASSERT_LT(std::abs(out.i[k] - clean.i[k]), 1e-6 * 0.7);
        ASSERT_LT(std::abs(out.q[k] - clean.q[k]), 1e-6 * 0.7);
    }
    const auto same = skew(clean, 1.0, 0.0);
    const auto ident = iq_correct(same);
    EXPECT_EQ(ident.i, same.i);
    EXPECT_EQ(ident.q, same.q);
}

TEST(IqCorrect, ZeroInputIsFlaggedPassthrough)
{
    BasebandSignal z;
    z.sample_rate = kFs;
    z.i.assign(512, 0.0);
    z.q.assign(512, 0.0);
    const auto out = iq_correct(z);
    EXPECT_EQ(out.i, z.i);
    EXPECT_EQ(out.q, z.q);
    EXPECT_FALSE(out.meta.warnings.empty());

    z.i.resize(100);
    z.q.resize(100);
    EXPECT_THROW(iq_correct(z), DomainError);
}

// Detrend ----------------------------------------------------------------------

TEST(Detrend, RemovesExactLine)
{
    std::vector<double> x(1000);
    for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] = 0.003 * static_cast<double>(k) - 2.5;
    }
    for (double v : detrend(x)) {
        ASSERT_NEAR(v, 0.0, 1e-9 * 3.0);
    }
    std::vector<double> c(300, 4.25);
    for (double v : detrend(c)) {
        ASSERT_NEAR(v, 0.0, 1e-12);
    }
    EXPECT_THROW(detrend(std::vector<double>{1.0}), DomainError);
}

TEST(Detrend, PreservesSinusoidAndLeavesZeroFit)
{
    const std::size_t n = 5000;
    std::vector<double> x(n), clean(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / kFs;
        clean[k] = std::sin(2.0 * kPi * 30.0 * t);
        x[k] = clean[k] + 0.5 + 0.01 * t;
    }
    const auto y = detrend(x);
    // Amplitude by projection onto the 30 Hz basis.
    double a_sin = 0.0, a_cos = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double ph = 2.0 * kPi * 30.0 * static_cast<double>(k) / kFs;
        a_sin += y[k] * std::sin(ph);
        a_cos += y[k] * std::cos(ph);
    }
    const double amplitude = 2.0 * std::hypot(a_sin, a_cos) / static_cast<double>(n);
    EXPECT_NEAR(amplitude, 1.0, 0.01);

    // Independent least-squares fit of the output: slope and intercept vanish.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k);
        sx += t;
        sy += y[k];
        sxx += t * t;
        sxy += t * y[k];
    }
    const double dn = static_cast<double>(n);
    const double slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / dn;
    EXPECT_LT(std::abs(slope), 1e-9);
    EXPECT_LT(std::abs(intercept), 1e-9);

    const auto twice = detrend(y);
    for (std::size_t k = 0; k < n; ++k) {
        ASSERT_NEAR(twice[k], y[k], 1e-12);
    }
}

// Butterworth -----------------------------------------------------------------

TEST(Butterworth, MatchesAnalyticMagnitudeUpTo90PercentNyquist)
{
    for (int order : {1, 2, 5, 6}) {
        for (double fc : {25.0, 150.0, 400.0}) {
            const auto filt = butterworth_design({order, fc, kFs});
            EXPECT_EQ(filt.sections().size(), static_cast<std::size_t>((order + 1) / 2));
            for (double f = 0.0; f <= 0.9 * kFs / 2.0; f += 5.0) {
                const double got = db(std::norm(filt.response(f, kFs)));
                const double want = db(analytic_gain2(f, fc, kFs, order));
                ASSERT_NEAR(got, want, 0.1) << "order " << order << " fc " << fc << " f " << f;
            }
        }
    }
}

TEST(Butterworth, HalfPowerAndOneOctaveAttenuation)
{
    const auto filt = butterworth_design({5, 150.0, kFs});
    EXPECT_NEAR(db(std::norm(filt.response(150.0, kFs))), -3.0103, 1e-3);
    EXPECT_NEAR(std::abs(filt.response(0.0, kFs)), 1.0, 1e-12);
    // Far below Nyquist the frequency warp vanishes and 2 fc sits at 10 log10(1 + 2^10).
    const auto low = butterworth_design({5, 10.0, kFs});
    EXPECT_NEAR(db(std::norm(low.response(20.0, kFs))), -30.106, 0.1);
}

TEST(Butterworth, ImpulseResponseDecays)
{
    const auto filt = butterworth_design({5, 150.0, kFs});
    std::vector<double> x(5000, 0.0);
    x[0] = 1.0;
    const auto y = filt.filter(x);
    for (std::size_t k = 2500; k < y.size(); ++k) {
        ASSERT_LT(std::abs(y[k]), 1e-9) << k;
    }
    // Filtering a constant settles to the constant (unity DC gain).
    const auto dc = filt.filter(std::vector<double>(3000, 2.0));
    EXPECT_NEAR(dc.back(), 2.0, 1e-9);
}

TEST(Butterworth, RejectsInvalidSpecs)
{
    EXPECT_THROW(butterworth_design({5, 1250.0, kFs}), DomainError);
    EXPECT_THROW(butterworth_design({5, 0.0, kFs}), DomainError);
    EXPECT_THROW(butterworth_design({0, 100.0, kFs}), DomainError);
}

// STFT -------------------------------------------------------------------------

TEST(Stft, ToneRidgeKeepsSign)
{
    for (double hz : {32.0, -32.0}) {
        const auto spec = stft(tone(hz, 5000), StftSpec{});
        EXPECT_EQ(spec.n_freq, 512U);
        EXPECT_EQ(spec.n_time, 1 + (5000 - 256) / 64U);
        for (std::size_t t = 0; t < spec.n_time; ++t) {
            std::size_t best = 0;
            for (std::size_t f = 1; f < spec.n_freq; ++f) {
                if (spec.at(f, t) > spec.at(best, t)) {
                    best = f;
                }
            }
            ASSERT_LE(std::abs(spec.freqs[best] - hz), spec.bin_width()) << "frame " << t;
        }
    }
}

TEST(Stft, AxesAndZeroSignal)
{
    BasebandSignal z;
    z.sample_rate = kFs;
    z.i.assign(1000, 0.0);
    z.q.assign(1000, 0.0);
    const auto spec = stft(z, StftSpec{});
    for (std::size_t k = 1; k < spec.freqs.size(); ++k) {
        ASSERT_GT(spec.freqs[k], spec.freqs[k - 1]);
    }
    EXPECT_LT(spec.freqs.front(), 0.0);
    EXPECT_GT(spec.freqs.back(), 0.0);
    for (double v : spec.mag_db) {
        ASSERT_EQ(v, kDbFloor);
    }
    z.i.resize(200);
    z.q.resize(200);
    EXPECT_THROW(stft(z, StftSpec{}), DomainError);
    EXPECT_THROW(stft(tone(1.0, 1000), StftSpec{256, 300, 512}), DomainError);
}

TEST(Stft, ParsevalPerFrame)
{
    Rng rng(8);
    BasebandSignal s;
    s.sample_rate = kFs;
    for (int k = 0; k < 1000; ++k) {
        s.i.push_back(rng.normal());
        s.q.push_back(rng.normal());
    }
    const StftSpec cfg{};
    const auto spec = stft(s, cfg);
    const auto w = make_window(cfg.window, cfg.window_len);
    for (std::size_t t = 0; t < spec.n_time; ++t) {
        double time_energy = 0.0;
        for (std::size_t k = 0; k < cfg.window_len; ++k) {
            const std::size_t idx = t * cfg.hop + k;
            time_energy += w[k] * w[k] * (s.i[idx] * s.i[idx] + s.q[idx] * s.q[idx]);
        }
        double freq_energy = 0.0;
        for (std::size_t f = 0; f < spec.n_freq; ++f) {
            freq_energy += std::pow(10.0, spec.at(f, t) / 10.0);
        }
        ASSERT_NEAR(freq_energy / static_cast<double>(cfg.fft_len) / time_energy, 1.0, 1e-6) << "frame " << t;
    }
}

TEST(Stft, WindowsAreSymmetric)
{
    const auto hann = make_window(Taper::hann, 256);
    EXPECT_NEAR(hann[128], 1.0, 1e-3);
    EXPECT_NEAR(hann[0], 0.0, 1e-12);
    EXPECT_EQ(taper_from_string("hamming"), Taper::hamming);
    EXPECT_EQ(to_string(Taper::rectangular), "rectangular");
    EXPECT_THROW(taper_from_string("kaiser"), Error);
}

// Thresholding and images -----------------------------------------------------

TEST(Threshold, ClipsToRangeAndIsIdempotent)
{
    auto s = synthetic_spectrogram(64, 20, 2500.0);
    for (std::size_t k = 0; k < s.mag_db.size(); ++k) {
        s.mag_db[k] = -80.0 + 80.0 * static_cast<double>(k % 97) / 96.0;
    }
    const auto c = threshold_dynamic_range(s, 40.0);
    const auto [lo, hi] = std::minmax_element(c.mag_db.begin(), c.mag_db.end());
    EXPECT_DOUBLE_EQ(*hi, 0.0);
    EXPECT_DOUBLE_EQ(*hi - *lo, 40.0);
    EXPECT_EQ(threshold_dynamic_range(c, 40.0).mag_db, c.mag_db);
    EXPECT_EQ(threshold_dynamic_range(s, 200.0).mag_db, s.mag_db);
    EXPECT_THROW(threshold_dynamic_range(s, 0.0), DomainError);
}

TEST(Image, UniformSpectrogramGivesUniformImage)
{
    auto s = synthetic_spectrogram(512, 40, 2500.0);
    std::fill(s.mag_db.begin(), s.mag_db.end(), -12.0);
    const auto img = to_image(s, 64, 300.0);
    EXPECT_EQ(img.pixels.size(), 64U * 64U);
    for (double p : img.pixels) {
        ASSERT_EQ(p, img.pixels.front());
    }
}

TEST(Image, BinaryRidgeTracksRidge)
{
    // A ridge sweeping from -100 Hz to +100 Hz.
    auto s = synthetic_spectrogram(512, 64, 2500.0);
    std::fill(s.mag_db.begin(), s.mag_db.end(), -40.0);
    std::vector<double> ridge(64);
    for (std::size_t t = 0; t < 64; ++t) {
        ridge[t] = -100.0 + 200.0 * static_cast<double>(t) / 63.0;
        std::size_t best = 0;
        for (std::size_t f = 0; f < 512; ++f) {
            if (std::abs(s.freqs[f] - ridge[t]) < std::abs(s.freqs[best] - ridge[t])) {
                best = f;
            }
        }
        for (std::size_t f = best - 1; f <= best + 1; ++f) {
            s.at(f, t) = 0.0;
        }
    }
    const std::size_t n = 64;
    const double span = 300.0;
    const auto img = to_image(s, n, span, 0.5);
    const double row_hz = span / static_cast<double>(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::vector<std::size_t> on;
        for (std::size_t row = 0; row < n; ++row) {
            const double p = img.at(row, col);
            ASSERT_TRUE(p == 0.0 || p == 1.0);
            if (p == 1.0) {
                on.push_back(row);
            }
        }
        ASSERT_FALSE(on.empty()) << "col " << col;
        // Contiguous band.
        EXPECT_EQ(on.back() - on.front() + 1, on.size()) << "col " << col;
        const double centre_row = 0.5 * static_cast<double>(on.front() + on.back());
        const double f = span / 2.0 - (centre_row + 0.5) * row_hz;
        const double t_frac = (static_cast<double>(col) + 0.5) / static_cast<double>(n);
        const double expected = -100.0 + 200.0 * std::clamp((t_frac * 64.0 - 0.5) / 63.0, 0.0, 1.0);
        EXPECT_NEAR(f, expected, 2.0 * s.bin_width()) << "col " << col;
    }
}

TEST(Image, SizesAndErrors)
{
    const auto spec = stft(tone(20.0, 5000), StftSpec{});
    const auto big = to_image(spec, 300, 300.0);
    EXPECT_EQ(big.n, 300U);
    EXPECT_EQ(big.pixels.size(), 90000U);
    EXPECT_NEAR(big.window_seconds, 2.0, 0.05);
    for (double p : big.pixels) {
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
    }
    EXPECT_THROW(to_image(spec, 15, 300.0), DomainError);
    EXPECT_THROW(to_image(spec, 64, 5000.0), DomainError);
}

TEST(Image, PgmRoundTripAndCorruption)
{
    test::TempDir dir;
    const auto img = to_image(stft(tone(-45.0, 5000), StftSpec{}), 64, 300.0);
    const auto path = dir.path() / "a.pgm";
    write_pgm(img, path);
    const auto back = read_pgm(path);
    EXPECT_EQ(back.n, img.n);
    EXPECT_EQ(back.pixels, img.pixels);

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
    EXPECT_THROW(read_pgm(path), FormatError);
    std::ofstream(dir.path() / "b.pgm") << "P2\n2 2\n255\n0 0 0 0\n";
    EXPECT_THROW(read_pgm(dir.path() / "b.pgm"), FormatError);
    std::ofstream(dir.path() / "c.pgm") << "P5\n3 2\n255\n123456";
    EXPECT_THROW(read_pgm(dir.path() / "c.pgm"), FormatError);
}

// Adaptive baseline ------------------------------------------------------------

TEST(AdaptiveBaseline, ConstantHistory)
{
    AdaptiveBaseline b(10, 10, 0.05, 0.123);
    EXPECT_EQ(b.threshold(), 0.123);
    for (int k = 0; k < 30; ++k) {
        b.push(2.0);
    }
    EXPECT_DOUBLE_EQ(b.threshold(), 0.1);
}

TEST(AdaptiveBaseline, StableBetweenUpdatesAndTracksStep)
{
    AdaptiveBaseline b(10, 10, 0.05);
    for (int k = 0; k < 20; ++k) {
        b.push(1.0);
    }
    const double before = b.threshold();
    const auto updates = b.updates();
    for (int k = 0; k < 9; ++k) {
        b.push(10.0);
        EXPECT_EQ(b.threshold(), before);
    }
    b.push(10.0);
    EXPECT_EQ(b.updates(), updates + 1);
    EXPECT_DOUBLE_EQ(b.threshold(), 0.5);
}

// Chain ------------------------------------------------------------------------

TEST(Chain, ScaleInvariantImages)
{
    const auto traj = motion::generate_trajectory(
        motion::nominal_params(motion::ActivityClass::sinusoidal), 2.0, kFs);
    channel::ImpairmentConfig imp{1.05, 0.05, 0.02, -0.015, 0.005};
    const auto sig = channel::synthesize(traj, channel::RadarConfig{}, channel::TagConfig{}, imp, 21);
    const ChainConfig cfg;
    const auto ref = process_window(sig, cfg).image;
    for (double alpha : {0.1, 10.0}) {
        auto scaled = sig;
        for (std::size_t k = 0; k < sig.size(); ++k) {
            scaled.i[k] *= alpha;
            scaled.q[k] *= alpha;
        }
        const auto img = process_window(scaled, cfg).image;
        EXPECT_EQ(img.pixels, ref.pixels) << "alpha " << alpha;
    }
}

TEST(Chain, DominantRowMatchesDoppler)
{
    channel::RadarConfig radar;
    radar.constant_amplitude = true;
    const ChainConfig cfg;
    const double row_hz = cfg.freq_span / static_cast<double>(cfg.image_size);
    for (double v : {-2.5, -1.0, -0.3, 0.4, 1.2, 2.5}) {
        const auto traj = motion::constant_velocity(6.0, v, 2.0, kFs);
        const auto sig = channel::synthesize(traj, radar, channel::TagConfig{}, channel::ImpairmentConfig{}, 4);
        const auto img = process_window(sig, cfg).image;
        std::size_t best = 0;
        double best_sum = -1.0;
        for (std::size_t row = 0; row < img.n; ++row) {
            double sum = 0.0;
            for (std::size_t col = 0; col < img.n; ++col) {
                sum += img.at(row, col);
            }
            if (sum > best_sum) {
                best_sum = sum;
                best = row;
            }
        }
        const double f = cfg.freq_span / 2.0 - (static_cast<double>(best) + 0.5) * row_hz;
        const double bin = std::max(row_hz, kFs / static_cast<double>(cfg.stft.fft_len));
        EXPECT_NEAR(f, channel::harmonic_doppler(v, 2, radar.f1), bin) << "v " << v;
    }
}

TEST(Chain, ReportsPowers)
{
    const auto traj = motion::generate_trajectory(
        motion::nominal_params(motion::ActivityClass::no_motion), 2.0, kFs);
    channel::RadarConfig radar;
    radar.noise_floor = 0.0;
    radar.reference_range = traj.params.r0;
    const auto sig = channel::synthesize(traj, radar, channel::TagConfig{}, channel::ImpairmentConfig{}, 1);
    const auto res = process_window(sig, ChainConfig{});
    EXPECT_NEAR(res.received_power, 0.25, 1e-9);
    EXPECT_LT(res.motion_power, 1e-12);
    EXPECT_EQ(res.image.n, 64U);
}
