#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "vibraforge/segmentation.hpp"

using namespace vibraforge;

namespace {

constexpr double kPi = std::numbers::pi;

SampledWaveform tone(double hz, double seconds, double amp = 1.0, double rate = 44100, double phase = 0) {
    SampledWaveform w;
    w.sample_rate_hz = rate;
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
    for (std::size_t i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2 * kPi * hz * static_cast<double>(i) / rate + phase));
    return w;
}

SampledWaveform am(double carrier, double mod, double seconds, double rate = 44100) {
    SampledWaveform w;
    w.sample_rate_hz = rate;
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        w.samples.push_back(std::sin(2 * kPi * carrier * t) * std::sin(2 * kPi * mod * t));
    }
    return w;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Direct zero-padded DFT magnitude of one Hann-windowed frame; returns the
// peak bin above `first_bin`.
std::size_t naive_peak_bin(const std::vector<double>& x, std::size_t centre, std::size_t first_bin) {
    const std::size_t win = 1024, nfft = 4096;
    std::vector<double> frame(win, 0.0);
    for (std::size_t i = 0; i < win; ++i) {
        const auto s = static_cast<long long>(centre) - 512 + static_cast<long long>(i);
        if (s >= 0 && s < static_cast<long long>(x.size()))
            frame[i] = x[static_cast<std::size_t>(s)] * (0.5 - 0.5 * std::cos(2 * kPi * static_cast<double>(i) / win));
    }
    std::size_t best = first_bin;
    double best_mag = -1;
    for (std::size_t k = first_bin; k < nfft / 2; ++k) {
        double re = 0, im = 0;
        for (std::size_t i = 0; i < win; ++i) {
            const double ph = 2 * kPi * static_cast<double>(k * i % nfft) / nfft;
            re += frame[i] * std::cos(ph);
            im -= frame[i] * std::sin(ph);
        }
        const double m = std::hypot(re, im);
        if (m > best_mag) {
            best_mag = m;
            best = k;
        }
    }
    return best;
}

}  // namespace

TEST(Dominant, PureToneEveryFrame) {
    const auto f = dominant_frequency(tone(200, 1.0));
    ASSERT_FALSE(f.empty());
    for (const auto& v : f) {
        ASSERT_TRUE(v.has_value());
        EXPECT_NEAR(*v, 200.0, 2.0);
    }
}

TEST(Dominant, ModulatedToneSitsAtCarrier) {
    const auto f = dominant_frequency(am(200, 5, 2.0));
    int voiced = 0;
    for (const auto& v : f) {
        if (!v) continue;
        ++voiced;
        EXPECT_NEAR(*v, 200.0, 6.0);
    }
    EXPECT_GT(voiced, 350);
}

TEST(Dominant, SilenceHasNoFrequency) {
    SampledWaveform w;
    w.samples.assign(44100, 0.0);
    for (const auto& v : dominant_frequency(w)) EXPECT_FALSE(v.has_value());
}

TEST(Dominant, EmptyInputThrows) {
    EXPECT_THROW(dominant_frequency(SampledWaveform{}), EmptyInputError);
    EXPECT_THROW(envelope(SampledWaveform{}), EmptyInputError);
    EXPECT_THROW(segment(SampledWaveform{}), EmptyInputError);
}

TEST(Dominant, BadStftParameters) {
    const auto w = tone(200, 0.1);
    EXPECT_THROW(dominant_frequency(w, 128), ValidationError);
    EXPECT_THROW(dominant_frequency(w, 1024, 400), ValidationError);
}

// Peak bins agree with a direct DFT on random two-tone mixtures.
TEST(Dominant, MatchesNaiveDft) {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> hz(110, 900), amp(0.1, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
        SampledWaveform w;
        const double f1 = hz(rng), f2 = hz(rng), a1 = amp(rng), a2 = amp(rng);
        for (int i = 0; i < 4410; ++i) {
            const double t = i / 44100.0;
            w.samples.push_back(a1 * std::sin(2 * kPi * f1 * t) + a2 * std::sin(2 * kPi * f2 * t + 1.0));
        }
        const auto got = dominant_frequency(w, 1024, 0, 100.0, 0);
        const double bin_hz = 44100.0 / 4096;
        for (std::size_t j : {std::size_t{3}, std::size_t{10}, std::size_t{17}}) {
            const auto want = naive_peak_bin(w.samples, j * 221, 10);
            ASSERT_TRUE(got[j].has_value());
            EXPECT_NEAR(*got[j], static_cast<double>(want) * bin_hz, bin_hz * 0.5 + 1e-9);
        }
    }
}

TEST(Envelope, ModulatedToneFollowsModulator) {
    const auto w = am(200, 5, 2.0);
    const auto e = envelope(w);
    std::vector<double> want(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) want[i] = std::abs(std::sin(2 * kPi * 5 * static_cast<double>(i) / 44100));
    EXPECT_GE(pearson(e, want), 0.98);
}

TEST(Envelope, ConstantToneIsFlat) {
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> hz(110, 800), amp(0.05, 1.0), ph(0, 2 * kPi), dur(0.05, 1.5);
    for (int trial = 0; trial < 20; ++trial) {
        const double a = amp(rng);
        const auto e = envelope(tone(hz(rng), dur(rng), a, 44100, ph(rng)));
        for (double v : e) ASSERT_NEAR(v, a, 0.05 * a);
    }
}

TEST(Envelope, ZeroSignal) {
    SampledWaveform w;
    w.samples.assign(1000, 0.0);
    for (double v : envelope(w)) EXPECT_EQ(v, 0.0);
}

TEST(Envelope, NonNegativeAndBoundsSamples) {
    const auto w = am(170, 3, 1.0);
    const auto e = envelope(w);
    for (std::size_t i = 0; i < e.size(); ++i) {
        EXPECT_GE(e[i], 0.0);
        EXPECT_GE(e[i], std::abs(w.samples[i]) - 0.05);
    }
}

// Agreement with the analytic-signal magnitude on clips with whole cycles,
// where the circular Hilbert transform has no edge error.
TEST(Envelope, WithinFivePercentRmsOfAnalytic) {
    for (const auto& w : {am(200, 5, 2.0), am(300, 8, 0.5), tone(170, 1.0, 0.7)}) {
        const auto e = envelope(w);
        const auto a = analytic_envelope(w);
        double err = 0, ref = 0;
        for (std::size_t i = 0; i < e.size(); ++i) {
            err += (e[i] - a[i]) * (e[i] - a[i]);
            ref += a[i] * a[i];
        }
        EXPECT_LE(std::sqrt(err / ref), 0.05);
    }
}

TEST(Analytic, MatchesClosedFormForWholeCycles) {
    const auto w = tone(250, 0.2, 0.6);
    for (double v : analytic_envelope(w)) EXPECT_NEAR(v, 0.6, 1e-6);
}

TEST(QuantizeFrequency, Examples) {
    EXPECT_EQ(quantize_frequency(170), 2);
    EXPECT_EQ(quantize_frequency(150), 1);
    EXPECT_EQ(quantize_frequency(500), 7);
    EXPECT_EQ(quantize_frequency(101), 0);
    EXPECT_THROW(quantize_frequency(100), BelowThresholdError);
    EXPECT_THROW(quantize_frequency(40), BelowThresholdError);
}

TEST(QuantizeFrequency, IdentityOnTable) {
    for (int i = 0; i < kFrequencyLevels; ++i) EXPECT_EQ(quantize_frequency(LevelTables::frequencies_hz[static_cast<std::size_t>(i)]), i);
}

// Brute force: the chosen level is never farther in log space than any other.
TEST(QuantizeFrequency, NearestInLogSpace) {
    for (double hz = 100.5; hz < 1000; hz += 0.25) {
        const int q = quantize_frequency(hz);
        const double d = std::abs(std::log(hz / LevelTables::frequencies_hz[static_cast<std::size_t>(q)]));
        for (double f : LevelTables::frequencies_hz) ASSERT_LE(d, std::abs(std::log(hz / f)) + 1e-15);
    }
}

TEST(QuantizeIntensity, Examples) {
    EXPECT_EQ(quantize_intensity(1.0, 1.0), 15);
    EXPECT_FALSE(quantize_intensity(0.0, 1.0).has_value());
    EXPECT_EQ(quantize_intensity(0.5, 1.0), 8);
    EXPECT_EQ(quantize_intensity(0.019, 1.0), std::nullopt);
    EXPECT_EQ(quantize_intensity(0.02, 1.0), 0);
    EXPECT_THROW(quantize_intensity(0.5, 0.0), NormalizationError);
    EXPECT_THROW(quantize_intensity(0.5, -1.0), NormalizationError);
}

TEST(QuantizeIntensity, HalfUpOracle) {
    for (int k = 0; k <= 1500; ++k) {
        const double r = k / 1500.0;
        const auto q = quantize_intensity(r, 1.0);
        if (r < 0.02) {
            EXPECT_FALSE(q.has_value());
            continue;
        }
        // Level boundaries sit at (level + 0.5) / 15.
        int want = 0;
        while (want < 15 && r * 15 >= want + 0.5) ++want;
        EXPECT_EQ(q, want) << r;
    }
}

TEST(Hysteresis, SingleFrameFlickerSuppressed) {
    using O = std::optional<int>;
    EXPECT_EQ(apply_frequency_hysteresis({O(3), O(3), O(4), O(3), O(3)}), (std::vector<int>{3, 3, 3, 3, 3}));
    EXPECT_EQ(apply_frequency_hysteresis({O(3), O(4), O(4), O(4)}), (std::vector<int>{3, 4, 4, 4}));
    EXPECT_EQ(apply_frequency_hysteresis({O{}, O{}, O(5)}), (std::vector<int>{5, 5, 5}));
    EXPECT_EQ(apply_frequency_hysteresis({O{}, O{}}), (std::vector<int>{2, 2}));
    EXPECT_EQ(apply_frequency_hysteresis({O(1), O{}, O(6)}), (std::vector<int>{1, 1, 1}));
}

TEST(Segment, ModulatedToneFrames) {
    const auto s = segment(am(200, 5, 2.0));
    ASSERT_EQ(s.frames.size(), 400u);
    std::vector<double> level, want;
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
        if (s.frames[i].active) {
            EXPECT_EQ(s.frames[i].frequency_index, 3) << i;
        }
        level.push_back(s.frames[i].active ? s.frames[i].intensity : 0.0);
        want.push_back(std::abs(std::sin(2 * kPi * 5 * static_cast<double>(i) / 200)));
    }
    EXPECT_GE(pearson(level, want), 0.95);
}

TEST(Segment, SilenceIsInactive) {
    SampledWaveform w;
    w.samples.assign(22050, 0.0);
    const auto s = segment(w);
    EXPECT_EQ(s.frames.size(), 100u);
    for (const auto& f : s.frames) EXPECT_FALSE(f.active);
}

TEST(Segment, ConstantToneIsConstant) {
    const auto s = segment(tone(170, 0.4));
    ASSERT_EQ(s.frames.size(), 80u);
    for (const auto& f : s.frames) EXPECT_EQ(f, (SegmentFrame{true, 15, 2}));
}

TEST(Segment, FrameCountProperty) {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const double rate = trial % 2 ? 44100.0 : 8000.0 + static_cast<double>(rng() % 40000);
        const std::size_t n = 1 + rng() % 30000;
        SampledWaveform w;
        w.sample_rate_hz = rate;
        for (std::size_t i = 0; i < n; ++i) w.samples.push_back(std::sin(0.07 * static_cast<double>(i)));
        const auto want = static_cast<std::size_t>(std::ceil(static_cast<long double>(n) * 200 / rate - 1e-12L));
        EXPECT_EQ(segment(w).frames.size(), want) << n << " @ " << rate;
    }
}

TEST(Segment, ScalingKeepsFrequencyIndices) {
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> c(0.01, 50);
    const auto base = am(235, 4, 0.6);
    const auto ref = segment(base);
    for (int trial = 0; trial < 5; ++trial) {
        auto w = base;
        const double k = c(rng);
        for (double& v : w.samples) v *= k;
        const auto s = segment(w);
        ASSERT_EQ(s.frames.size(), ref.frames.size());
        for (std::size_t i = 0; i < s.frames.size(); ++i) EXPECT_EQ(s.frames[i].frequency_index, ref.frames[i].frequency_index);
    }
}

TEST(Segment, TextFormat) {
    SegmentedStream s;
    s.frames = {{true, 15, 2}, {false, 0, 2}};
    EXPECT_EQ(s.to_text(), "0 1 15 2\n1 0 0 2\n");
}

TEST(SampleCsv, ParseAndRoundTrip) {
    const auto w = parse_sample_csv("rate=44100\n0.5\n-0.25\r\n1e-3\n");
    EXPECT_EQ(w.sample_rate_hz, 44100);
    EXPECT_EQ(w.samples, (std::vector<double>{0.5, -0.25, 1e-3}));
    std::mt19937 rng(1);
    std::normal_distribution<double> d;
    SampledWaveform r;
    r.sample_rate_hz = 22050.5;
    for (int i = 0; i < 500; ++i) r.samples.push_back(d(rng));
    const auto back = parse_sample_csv(to_sample_csv(r));
    EXPECT_EQ(back.samples, r.samples);
    EXPECT_EQ(back.sample_rate_hz, r.sample_rate_hz);
}

TEST(SampleCsv, OneSecond) {
    auto w = tone(100, 1.0);
    EXPECT_EQ(w.samples.size(), 44100u);
    EXPECT_DOUBLE_EQ(parse_sample_csv(to_sample_csv(w)).duration_s(), 1.0);
}

TEST(SampleCsv, Errors) {
    EXPECT_THROW(parse_sample_csv(""), ParseError);
    EXPECT_THROW(parse_sample_csv("rate=44100\n"), ParseError);
    EXPECT_THROW(parse_sample_csv("0.1\n0.2\n"), ParseError);
    try {
        parse_sample_csv("rate=1000\n0.1\n0.2\nabc\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4);
    }
}
