#pragma once

// Two-byte chained command protocol.
//
//   byte1: [7..1] hop address   [0] 1 = START, 0 = STOP
//   byte2: [7..4] intensity     [3..1] frequency index   [0] 1 = SQUARE
//
// Every byte travels with an even parity bit. STOP is a single byte; START
// is always followed by its second byte. A unit receiving byte1 with a
// non-zero address decrements it and forwards; address zero selects it.

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vibraforge/errors.hpp"

namespace vibraforge {

inline constexpr int kMaxAddress = 127;
inline constexpr int kIntensityLevels = 16;
inline constexpr int kFrequencyLevels = 8;

enum class Action : std::uint8_t { stop = 0, start = 1 };
enum class WaveformSel : std::uint8_t { sine = 0, square = 1 };

/// Fixed actuator level tables shared by the firmware model and the
/// segmentation quantizers.
struct LevelTables {
    static constexpr std::array<double, kFrequencyLevels> frequencies_hz{
        123.0, 145.0, 170.0, 200.0, 235.0, 275.0, 322.0, 384.0};

    /// PWM duty of intensity level k: (k + 1) / 16, so level 7 is 50 % and
    /// level 15 is 100 %. True zero is only reachable with STOP.
    static constexpr double duty_fraction(int level) {
        if (level < 0 || level >= kIntensityLevels) {
            throw RangeError("intensity level out of range: " + std::to_string(level));
        }
        return static_cast<double>(level + 1) / kIntensityLevels;
    }

    static double frequency_hz(int index) {
        if (index < 0 || index >= kFrequencyLevels) {
            throw RangeError("frequency index out of range: " + std::to_string(index));
        }
        return frequencies_hz[static_cast<std::size_t>(index)];
    }
};

struct VibrationCommand {
    int address = 0;
    Action action = Action::stop;
    // Payload; meaningless for STOP and normalized to zero there.
    int intensity = 0;
    int frequency_index = 0;
    WaveformSel waveform = WaveformSel::sine;

    static VibrationCommand start(int address, int intensity, int frequency_index,
                                  WaveformSel waveform = WaveformSel::sine) {
        return {address, Action::start, intensity, frequency_index, waveform};
    }
    static VibrationCommand stop(int address) { return {address, Action::stop, 0, 0, WaveformSel::sine}; }

    bool is_start() const { return action == Action::start; }

    void validate() const {
        if (address < 0 || address > kMaxAddress) {
            throw RangeError("address out of range: " + std::to_string(address));
        }
        if (!is_start()) return;
        if (intensity < 0 || intensity >= kIntensityLevels) {
            throw RangeError("intensity out of range: " + std::to_string(intensity));
        }
        if (frequency_index < 0 || frequency_index >= kFrequencyLevels) {
            throw RangeError("frequency index out of range: " + std::to_string(frequency_index));
        }
    }

    // STOP commands compare on address only.
    friend bool operator==(const VibrationCommand& a, const VibrationCommand& b) {
        if (a.address != b.address || a.action != b.action) return false;
        if (!a.is_start()) return true;
        return a.intensity == b.intensity && a.frequency_index == b.frequency_index &&
               a.waveform == b.waveform;
    }
};

/// One UART data byte plus its parity bit.
struct FrameByte {
    std::uint8_t data = 0;
    bool parity = false;

    static constexpr bool even_parity(std::uint8_t value) { return (std::popcount(value) & 1) != 0; }

    /// Frame with a correctly computed parity bit.
    static constexpr FrameByte make(std::uint8_t value) { return {value, even_parity(value)}; }

    constexpr bool parity_ok() const { return parity == even_parity(data); }

    /// Flip one line bit: 0..7 are data bits, 8 is the parity bit.
    constexpr FrameByte with_bit_flipped(int bit) const {
        FrameByte out = *this;
        if (bit == 8) {
            out.parity = !out.parity;
        } else {
            out.data = static_cast<std::uint8_t>(out.data ^ (1u << bit));
        }
        return out;
    }

    friend constexpr bool operator==(const FrameByte&, const FrameByte&) = default;
};

using FrameSequence = std::vector<FrameByte>;

inline FrameSequence encode(const VibrationCommand& cmd) {
    cmd.validate();
    FrameSequence out;
    out.push_back(FrameByte::make(
        static_cast<std::uint8_t>((cmd.address << 1) | (cmd.is_start() ? 1 : 0))));
    if (cmd.is_start()) {
        out.push_back(FrameByte::make(static_cast<std::uint8_t>(
            (cmd.intensity << 4) | (cmd.frequency_index << 1) |
            (cmd.waveform == WaveformSel::square ? 1 : 0))));
    }
    return out;
}

inline int frame_address(FrameByte byte1) { return byte1.data >> 1; }

/// True iff byte1 carries the START bit, i.e. a payload byte follows. Holds
/// for intermediate hops too: they must pass the payload byte along.
inline bool expects_second_byte(FrameByte byte1) {
    if (!byte1.parity_ok()) throw ParityError("parity mismatch on first byte");
    return (byte1.data & 1u) != 0;
}

inline VibrationCommand decode(std::span<const FrameByte> frames) {
    if (frames.empty()) throw TruncationError("empty frame sequence");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!frames[i].parity_ok()) throw ParityError("parity mismatch on byte " + std::to_string(i));
    }
    VibrationCommand cmd;
    cmd.address = frame_address(frames[0]);
    if ((frames[0].data & 1u) == 0) {
        if (frames.size() != 1) throw RangeError("STOP command followed by a payload byte");
        cmd.action = Action::stop;
        return cmd;
    }
    if (frames.size() < 2) throw TruncationError("START command missing its second byte");
    if (frames.size() > 2) throw RangeError("trailing bytes after START payload");
    cmd.action = Action::start;
    const std::uint8_t payload = frames[1].data;
    cmd.intensity = payload >> 4;
    cmd.frequency_index = (payload >> 1) & 0x7;
    cmd.waveform = (payload & 1u) != 0 ? WaveformSel::square : WaveformSel::sine;
    return cmd;
}

struct HopDecision {
    enum class Kind { consume, forward };
    Kind kind = Kind::consume;
    FrameByte forwarded{};  // valid for Kind::forward

    bool consumed() const { return kind == Kind::consume; }
};

/// Decrement-and-forward rule applied by one unit to an incoming byte1.
inline HopDecision apply_hop(FrameByte byte1) {
    if (!byte1.parity_ok()) throw ParityError("parity mismatch on first byte");
    const int address = frame_address(byte1);
    if (address == 0) return {HopDecision::Kind::consume, {}};
    const auto next = static_cast<std::uint8_t>(((address - 1) << 1) | (byte1.data & 1u));
    return {HopDecision::Kind::forward, FrameByte::make(next)};
}

inline const char* to_string(Action a) { return a == Action::start ? "START" : "STOP"; }
inline const char* to_string(WaveformSel w) { return w == WaveformSel::square ? "SQUARE" : "SINE"; }

}  // namespace vibraforge
