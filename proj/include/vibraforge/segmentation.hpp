#pragma once

// Audio-rate waveform -> 200 Hz stream of (active, intensity, frequency index).
//
// Content above 100 Hz is rendered through the frequency levels (dominant STFT
// frequency per frame); the envelope drives the intensity levels.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vibraforge/dsp.hpp"
#include "vibraforge/errors.hpp"
#include "vibraforge/protocol.hpp"

namespace vibraforge {

inline constexpr double kFrameRateHz = 200.0;
inline constexpr double kSegmentationThresholdHz = 100.0;
inline constexpr double kSilenceFloor = 0.02;  // fraction of the global max
inline constexpr std::size_t kStftWindow = 1024;
inline constexpr std::size_t kStftFftLen = 4096;
inline constexpr double kEnvelopeCutoffHz = 40.0;
inline constexpr int kDefaultFrequencyIndex = 2;  // 170 Hz, used before any tone is seen

struct SampledWaveform {
    std::vector<double> samples;
    double sample_rate_hz = 44100.0;

    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
    friend bool operator==(const SampledWaveform&, const SampledWaveform&) = default;

    void validate() const {
        if (!(sample_rate_hz >= 1000.0) || !std::isfinite(sample_rate_hz)) {
            throw AliasingError("sample rate must be at least 1 kHz");
        }
        for (double v : samples) {
            if (!std::isfinite(v)) throw ValidationError("non-finite sample");
        }
    }
};

/// Number of 5 ms frames covering n samples: ceil(n * 200 / rate).
inline std::size_t frame_count(std::size_t n_samples, double sample_rate_hz) {
    const double exact = static_cast<double>(n_samples) * kFrameRateHz / sample_rate_hz;
    const double r = std::round(exact);
    // Snap values within rounding noise of an integer.
    if (std::abs(exact - r) < 1e-9) return static_cast<std::size_t>(r);
    return static_cast<std::size_t>(std::ceil(exact));
}

inline std::size_t default_hop(double sample_rate_hz) {
    return static_cast<std::size_t>(std::lround(sample_rate_hz / kFrameRateHz));
}

inline constexpr std::size_t kSpectralSmoothingFrames = 2;

/// Per-frame dominant frequency. Frame j is centred on sample j * hop (the
/// window is shifted inward near the clip edges) and Hann-windowed, then
/// zero-padded to 4096 points. The peak is taken from the power spectrum
/// summed over the frame and `smoothing` frames on either side, and refined
/// by a parabola through the log magnitudes around it. Summing keeps frames
/// that sit on an amplitude-modulation null, where the two sidebands cancel
/// at the carrier, locked to the carrier. Frames whose own peak is below 2 %
/// of the loudest frame's peak report nullopt. Only bins above `min_hz` are
/// searched.
inline std::vector<std::optional<double>> dominant_frequency(const SampledWaveform& w,
                                                             std::size_t window_len = kStftWindow,
                                                             std::size_t hop_len = 0, double min_hz = 0.0,
                                                             std::size_t smoothing = kSpectralSmoothingFrames) {
    if (w.samples.empty()) throw EmptyInputError("empty waveform");
    w.validate();
    if (hop_len == 0) hop_len = default_hop(w.sample_rate_hz);
    if (window_len < 256) throw ValidationError("STFT window must be at least 256 samples");
    if (hop_len > default_hop(w.sample_rate_hz)) throw ValidationError("STFT hop too long for a 200 Hz frame rate");
    const std::size_t nfft = std::max(kStftFftLen, dsp::next_pow2(window_len));
    const std::size_t n = w.samples.size();
    const std::size_t frames = (n - 1) / hop_len + 1;

    std::vector<double> hann(window_len);
    for (std::size_t i = 0; i < window_len; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(window_len));
    }
    const double bin_hz = w.sample_rate_hz / static_cast<double>(nfft);
    const auto first_bin = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(min_hz / bin_hz)) + 1);

    const std::size_t bins = nfft / 2 + 1;
    std::vector<double> peak_mag(frames, 0.0), peak_hz(frames, 0.0);
    std::vector<dsp::cplx> buf(nfft);
    const std::int64_t last_start =
        std::max<std::int64_t>(0, static_cast<std::int64_t>(n) - static_cast<std::int64_t>(window_len));
    auto power_of = [&](std::size_t j, std::vector<double>& p) {
        std::fill(buf.begin(), buf.end(), dsp::cplx{});
        const auto centre = static_cast<std::int64_t>(j * hop_len);
        const std::int64_t start =
            std::clamp<std::int64_t>(centre - static_cast<std::int64_t>(window_len / 2), 0, last_start);
        for (std::size_t i = 0; i < window_len; ++i) {
            const std::int64_t s = start + static_cast<std::int64_t>(i);
            if (s < static_cast<std::int64_t>(n)) buf[i] = w.samples[static_cast<std::size_t>(s)] * hann[i];
        }
        dsp::fft(buf);
        p.resize(bins);
        double peak = 0;
        for (std::size_t k = 0; k < bins; ++k) {
            p[k] = std::norm(buf[k]);
            if (k >= first_bin && k + 1 < bins) peak = std::max(peak, p[k]);
        }
        peak_mag[j] = std::sqrt(peak);
    };

    // Ring of the 2 * smoothing + 1 spectra around the current frame.
    const std::size_t ring_len = 2 * smoothing + 1;
    std::vector<std::vector<double>> ring(ring_len);
    std::size_t computed = 0;
    std::vector<double> sum(bins);
    for (std::size_t j = 0; j < frames; ++j) {
        const std::size_t hi = std::min(frames, j + smoothing + 1);
        for (; computed < hi; ++computed) power_of(computed, ring[computed % ring_len]);
        const std::size_t lo = j >= smoothing ? j - smoothing : 0;
        std::fill(sum.begin(), sum.end(), 0.0);
        for (std::size_t m = lo; m < hi; ++m) {
            const auto& p = ring[m % ring_len];
            for (std::size_t k = 0; k < bins; ++k) sum[k] += p[k];
        }
        std::size_t best = first_bin;
        for (std::size_t k = first_bin; k + 1 < bins; ++k) {
            if (sum[k] > sum[best]) best = k;
        }
        double delta = 0;
        if (best > 0 && best + 1 < bins && sum[best - 1] > 0 && sum[best + 1] > 0 && sum[best] > 0) {
            // Half the log power = log magnitude.
            const double a = 0.5 * std::log(sum[best - 1]), b = 0.5 * std::log(sum[best]),
                         c = 0.5 * std::log(sum[best + 1]);
            const double den = a - 2 * b + c;
            if (den < 0) delta = std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
        }
        peak_hz[j] = (static_cast<double>(best) + delta) * bin_hz;
    }

    const double loudest = *std::max_element(peak_mag.begin(), peak_mag.end());
    std::vector<std::optional<double>> out(frames);
    for (std::size_t j = 0; j < frames; ++j) {
        if (loudest > 0 && peak_mag[j] >= kSilenceFloor * loudest) out[j] = peak_hz[j];
    }
    return out;
}

/// Magnitude of the analytic signal (FFT Hilbert transform over the exact
/// signal length). Reference envelope.
inline std::vector<double> analytic_envelope(const SampledWaveform& w) {
    const auto a = dsp::analytic_signal(w.samples);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
    return out;
}

namespace detail {

// Per-sample carrier frequency: the nearest frame's dominant frequency above
// the threshold, else its unrestricted dominant frequency, else the nearest
// frame that has one.
inline std::vector<double> carrier_per_frame(const SampledWaveform& w, std::size_t hop,
                                             const std::vector<std::optional<double>>& hi) {
    std::vector<std::optional<double>> f = hi;
    if (std::any_of(hi.begin(), hi.end(), [](const auto& v) { return !v; })) {
        const auto any = dominant_frequency(w, kStftWindow, hop, 0.0);
        for (std::size_t j = 0; j < f.size(); ++j) f[j] = hi[j] ? hi[j] : any[j];
    }
    std::vector<double> out(f.size(), w.sample_rate_hz / 4);
    std::optional<std::size_t> last;
    std::vector<std::optional<std::size_t>> left(f.size()), right(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        if (f[j]) last = j;
        left[j] = last;
    }
    last.reset();
    for (std::size_t j = f.size(); j-- > 0;) {
        if (f[j]) last = j;
        right[j] = last;
    }
    for (std::size_t j = 0; j < f.size(); ++j) {
        std::optional<std::size_t> pick;
        if (left[j] && right[j]) {
            pick = (j - *left[j] <= *right[j] - j) ? left[j] : right[j];
        } else {
            pick = left[j] ? left[j] : right[j];
        }
        if (pick) out[j] = std::max(1.0, *f[*pick]);
    }
    return out;
}

}  // namespace detail

namespace detail {

// `dom` is dominant_frequency(w, kStftWindow, default hop, threshold).
inline std::vector<double> envelope(const SampledWaveform& w, const std::vector<std::optional<double>>& dom) {
    const auto& x = w.samples;
    const std::size_t n = x.size();
    if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) return std::vector<double>(n, 0.0);

    const std::size_t hop = default_hop(w.sample_rate_hz);
    const auto carrier = detail::carrier_per_frame(w, hop, dom);
    std::vector<double> e2(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (n < 3) {
            e2[i] = x[i] * x[i];
            continue;
        }
        const std::size_t c = std::clamp<std::size_t>(i, 1, n - 2);
        const std::size_t frame = std::min(carrier.size() - 1, (c + hop / 2) / hop);
        const double s = 2 * std::sin(2 * std::numbers::pi * std::min(carrier[frame], w.sample_rate_hz / 4) /
                                      w.sample_rate_hz);
        const double q = (x[c + 1] - x[c - 1]) / s;
        e2[i] = x[c] * x[c] + q * q;
    }

    const auto pad = static_cast<std::size_t>(std::lround(0.25 * w.sample_rate_hz));
    const auto lp = dsp::butterworth4_lowpass(kEnvelopeCutoffHz, w.sample_rate_hz);
    const auto num = dsp::filtfilt(lp, e2, pad);
    const std::vector<double> ones(n, 1.0);
    const auto den = dsp::filtfilt(lp, ones, pad);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = den[i + pad];
        out[i] = d > 1e-12 ? std::sqrt(std::max(0.0, num[i + pad] / d)) : 0.0;
    }
    return out;
}

}  // namespace detail

/// Smooth amplitude envelope.
///
/// Each sample is paired with its quadrature estimate from a central
/// difference scaled for the local carrier frequency, which gives the exact
/// amplitude for a pure tone at any phase. The squared result is low-passed
/// (4th-order Butterworth, 40 Hz, forward-backward) with normalized
/// convolution at the clip boundaries so onsets and tails are not pulled
/// toward zero.
inline std::vector<double> envelope(const SampledWaveform& w) {
    if (w.samples.empty()) throw EmptyInputError("empty waveform");
    w.validate();
    return detail::envelope(w, dominant_frequency(w, kStftWindow, default_hop(w.sample_rate_hz), kSegmentationThresholdHz));
}

/// Nearest level in log-frequency, clamped to the table ends.
inline int quantize_frequency(double hz) {
    if (!(hz > kSegmentationThresholdHz)) {
        throw BelowThresholdError("frequency at or below the 100 Hz segmentation threshold");
    }
    const auto& table = LevelTables::frequencies_hz;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < table.size(); ++i) {
        const double d = std::abs(std::log(hz / table[i]));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

/// Intensity level round-half-up(15 * v / max); nullopt below the silence floor.
inline std::optional<int> quantize_intensity(double env_value, double env_max) {
    if (!(env_max > 0)) throw NormalizationError("envelope maximum must be positive");
    const double r = env_value / env_max;
    if (!(r >= kSilenceFloor)) return std::nullopt;
    return std::clamp(static_cast<int>(std::floor(r * 15 + 0.5)), 0, 15);
}

struct SegmentFrame {
    bool active = false;
    int intensity = 0;
    int frequency_index = kDefaultFrequencyIndex;
    friend bool operator==(const SegmentFrame&, const SegmentFrame&) = default;
};

struct SegmentedStream {
    double frame_rate_hz = kFrameRateHz;
    std::vector<SegmentFrame> frames;

    /// `frame_idx active intensity freq_idx`, one frame per line.
    std::string to_text() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            os << i << ' ' << (frames[i].active ? 1 : 0) << ' ' << frames[i].intensity << ' '
               << frames[i].frequency_index << '\n';
        }
        return os.str();
    }
};

/// A frequency index only changes when the new raw index holds for two
/// consecutive frames; the change takes effect on the first of them.
inline std::vector<int> apply_frequency_hysteresis(const std::vector<std::optional<int>>& raw) {
    std::vector<int> out(raw.size(), kDefaultFrequencyIndex);
    int held = kDefaultFrequencyIndex;
    for (const auto& r : raw) {
        if (r) {
            held = *r;
            break;
        }
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] && *raw[i] != held && i + 1 < raw.size() && raw[i + 1] == raw[i]) held = *raw[i];
        out[i] = held;
    }
    return out;
}

inline SegmentedStream segment(const SampledWaveform& w) {
    if (w.samples.empty()) throw EmptyInputError("empty waveform");
    w.validate();
    const std::size_t n = w.samples.size();
    const std::size_t hop = default_hop(w.sample_rate_hz);
    const auto dom = dominant_frequency(w, kStftWindow, hop, kSegmentationThresholdHz);
    const auto env = detail::envelope(w, dom);
    const double env_max = *std::max_element(env.begin(), env.end());

    SegmentedStream out;
    const std::size_t frames = frame_count(n, w.sample_rate_hz);
    std::vector<std::optional<int>> raw(frames);
    std::vector<std::optional<int>> level(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        const auto s = std::min<std::size_t>(
            n - 1, static_cast<std::size_t>(std::llround(static_cast<double>(i) * w.sample_rate_hz / kFrameRateHz)));
        const std::size_t j = std::min(dom.size() - 1, static_cast<std::size_t>(std::llround(
                                                            static_cast<double>(s) / static_cast<double>(hop))));
        if (dom[j] && *dom[j] > kSegmentationThresholdHz) raw[i] = quantize_frequency(*dom[j]);
        if (env_max > 0) level[i] = quantize_intensity(env[s], env_max);
    }
    const auto freq = apply_frequency_hysteresis(raw);
    out.frames.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        out.frames[i].active = level[i].has_value();
        out.frames[i].intensity = level[i].value_or(0);
        out.frames[i].frequency_index = freq[i];
    }
    return out;
}

/// Sample CSV: first line `rate=<hz>`, then one sample per line.
inline SampledWaveform parse_sample_csv(std::string_view text) {
    SampledWaveform w;
    std::size_t pos = 0;
    long long line_no = 0;
    bool have_header = false;
    auto trim = [](std::string_view s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
        return s;
    };
    auto number = [&](std::string_view s, double& v) {
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        return r.ec == std::errc{} && r.ptr == s.data() + s.size();
    };
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        const std::string_view line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) {
            if (end >= text.size()) break;
            continue;
        }
        if (!have_header) {
            if (line.substr(0, 5) != "rate=") throw ParseError("missing `rate=<hz>` header", line_no);
            if (!number(trim(line.substr(5)), w.sample_rate_hz) || !(w.sample_rate_hz > 0)) {
                throw ParseError("bad sample rate in header", line_no);
            }
            have_header = true;
            continue;
        }
        double v = 0;
        if (!number(line, v) || !std::isfinite(v)) throw ParseError("non-numeric sample", line_no);
        w.samples.push_back(v);
        if (end >= text.size()) break;
    }
    if (!have_header) throw ParseError("missing `rate=<hz>` header", 1);
    if (w.samples.empty()) throw ParseError("no samples after header", line_no);
    return w;
}

inline std::string to_sample_csv(const SampledWaveform& w) {
    std::string out = "rate=";
    char buf[64];
    auto put = [&](double v) {
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        out.append(buf, r.ptr);
        out.push_back('\n');
    };
    put(w.sample_rate_hz);
    for (double v : w.samples) put(v);
    return out;
}

}  // namespace vibraforge
