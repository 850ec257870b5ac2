#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vibraforge/errors.hpp"

namespace vibraforge {

inline constexpr int kMaxChains = 8;
inline constexpr int kMaxUnitsPerChain = 16;

/// Electrical constants of one vibration unit and the control unit.
struct Electrical {
    static constexpr double control_unit_current_a = 0.106;
    static constexpr double mcu_current_a = 0.0025;
    static constexpr double actuator_current_a = 0.150;  // at nominal supply
    static constexpr double mcu_min_voltage_v = 2.3;
    static constexpr double actuator_rated_voltage_v = 0.9;
};

/// One unit of the system: chain index and hop address on that chain.
struct UnitAddress {
    int chain = 0;
    int address = 0;
    friend auto operator<=>(const UnitAddress&, const UnitAddress&) = default;
};

enum class LoopMode { open, closed };

inline const char* to_string(LoopMode m) { return m == LoopMode::closed ? "closed" : "open"; }

/// Per-segment resistances of the three chain conductors. The ground wire is
/// shared by MCU and actuator return current. Defaults come from
/// `calibrate_wires()` (see ladder.hpp) and are pinned by a unit test.
struct WireModel {
    double mcu_line_ohm = 0.20350224204472955;
    double actuator_line_ohm = 0.20350224204472955;
    double ground_ohm = 0.36645026097001676;
    // Length of the return cable of a CLOSED chain, in segments.
    double loop_return_segments = 3.6417840103209924;

    void validate() const {
        if (!(mcu_line_ohm > 0) || !(actuator_line_ohm > 0) || !(ground_ohm > 0)) {
            throw TopologyError("wire resistance must be positive");
        }
        if (!(loop_return_segments > 0)) throw TopologyError("loop_return_segments must be positive");
    }
};

struct Topology {
    std::vector<int> chain_lengths;
    std::vector<LoopMode> loop_modes;  // empty, or one per chain; missing means OPEN
    WireModel wires;
    double supply_voltage_v = 5.0;

    static Topology uniform(int chains, int units_per_chain, LoopMode mode = LoopMode::open) {
        Topology t;
        t.chain_lengths.assign(static_cast<std::size_t>(chains), units_per_chain);
        t.loop_modes.assign(static_cast<std::size_t>(chains), mode);
        return t;
    }

    int chain_count() const { return static_cast<int>(chain_lengths.size()); }

    int unit_count() const {
        int n = 0;
        for (int len : chain_lengths) n += len;
        return n;
    }

    int longest_chain() const {
        int best = 0;
        for (int len : chain_lengths) best = len > best ? len : best;
        return best;
    }

    LoopMode loop_mode(int chain) const {
        const auto idx = static_cast<std::size_t>(chain);
        return idx < loop_modes.size() ? loop_modes[idx] : LoopMode::open;
    }

    void validate() const {
        if (chain_lengths.empty()) throw TopologyError("topology has no chains");
        if (chain_count() > kMaxChains) {
            throw TopologyError("at most 8 chains supported, got " + std::to_string(chain_count()));
        }
        for (std::size_t i = 0; i < chain_lengths.size(); ++i) {
            const int len = chain_lengths[i];
            if (len < 1 || len > kMaxUnitsPerChain) {
                throw TopologyError("chain " + std::to_string(i) + " length must be 1..16, got " +
                                    std::to_string(len));
            }
        }
        if (!loop_modes.empty() && loop_modes.size() != chain_lengths.size()) {
            throw TopologyError("loop_modes must list one mode per chain");
        }
        if (!(supply_voltage_v > 0)) throw TopologyError("supply voltage must be positive");
        wires.validate();
    }
};

/// Transport timing. Jitter is zero by default; when set, a seeded generator
/// draws a per-packet BLE delay in [0, ble_jitter_us].
struct LatencyModel {
    double ble_one_way_ms = 14.0;
    double hop_us = 125.0;
    double ble_processing_ms = 2.96;
    double ble_jitter_us = 0.0;

    void validate() const {
        if (ble_one_way_ms < 0 || hop_us < 0 || ble_processing_ms < 0 || ble_jitter_us < 0) {
            throw TopologyError("latency constants must be non-negative");
        }
    }

    std::int64_t ble_one_way_us() const { return static_cast<std::int64_t>(ble_one_way_ms * 1000.0 + 0.5); }
    std::int64_t hop_duration_us() const { return static_cast<std::int64_t>(hop_us + 0.5); }
    std::int64_t processing_us() const { return static_cast<std::int64_t>(ble_processing_ms * 1000.0 + 0.5); }
};

}  // namespace vibraforge
