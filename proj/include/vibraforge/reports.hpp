#pragma once

// Tabular reports: latency breakdown, bandwidth, battery life and the
// voltage-vs-active-count sweep. Serialized as line-oriented key=value text
// (see docs/reports.md).

#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "vibraforge/commands.hpp"
#include "vibraforge/ladder.hpp"
#include "vibraforge/power.hpp"
#include "vibraforge/scheduler.hpp"
#include "vibraforge/simulator.hpp"
#include "vibraforge/topology.hpp"

namespace vibraforge {

enum class ReportKind { latency, bandwidth, power, voltage_sweep };

inline const char* to_string(ReportKind k) {
    switch (k) {
        case ReportKind::latency: return "LATENCY";
        case ReportKind::bandwidth: return "BANDWIDTH";
        case ReportKind::power: return "POWER";
        case ReportKind::voltage_sweep: return "VOLTAGE_SWEEP";
    }
    return "?";
}

struct ReportRow {
    std::string label;
    std::vector<double> values;
};

struct Report {
    ReportKind kind = ReportKind::latency;
    std::string fingerprint;
    std::vector<std::pair<std::string, double>> summary;
    std::vector<std::string> columns;  // label column first
    std::vector<ReportRow> rows;
    std::vector<std::pair<std::string, std::string>> annotations;  // row label -> note

    double value(const std::string& key) const {
        for (const auto& [k, v] : summary)
            if (k == key) return v;
        throw ValidationError("report has no summary key `" + key + "`");
    }

    const ReportRow& row(const std::string& label) const {
        for (const auto& r : rows)
            if (r.label == label) return r;
        throw ValidationError("report has no row `" + label + "`");
    }

    double cell(const std::string& label, const std::string& column) const {
        for (std::size_t i = 1; i < columns.size(); ++i)
            if (columns[i] == column) return row(label).values.at(i - 1);
        throw ValidationError("report has no column `" + column + "`");
    }
};

inline std::string format_fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s(buf);
    if (s == "-0.000000") s = "0.000000";
    return s;
}

inline std::string to_text(const Report& r) {
    std::string out = "kind=" + std::string(to_string(r.kind)) + "\nfingerprint=" + r.fingerprint + "\n";
    for (const auto& [k, v] : r.summary) out += k + "=" + format_fixed(v) + "\n";
    out += "columns=";
    for (std::size_t i = 0; i < r.columns.size(); ++i) out += (i ? "," : "") + r.columns[i];
    out += "\n";
    for (const auto& row : r.rows) {
        out += "row=" + row.label;
        for (double v : row.values) out += "," + format_fixed(v);
        out += "\n";
    }
    for (const auto& [label, note] : r.annotations) out += "annotation=" + label + "," + note + "\n";
    return out;
}

// ---- fingerprint ----

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Canonical text of a topology and latency model.
inline std::string canonical_config(const Topology& t, const LatencyModel& l) {
    std::string s = "chains=";
    for (std::size_t i = 0; i < t.chain_lengths.size(); ++i) {
        s += (i ? "," : "") + std::to_string(t.chain_lengths[i]) + ":" + to_string(t.loop_mode(static_cast<int>(i)));
    }
    s += ";supply=" + format_number(t.supply_voltage_v) + ";wires=" + format_number(t.wires.mcu_line_ohm) + "," +
         format_number(t.wires.actuator_line_ohm) + "," + format_number(t.wires.ground_ohm) + "," +
         format_number(t.wires.loop_return_segments) + ";latency=" + format_number(l.ble_one_way_ms) + "," +
         format_number(l.hop_us) + "," + format_number(l.ble_processing_ms) + "," + format_number(l.ble_jitter_us);
    return s;
}

inline std::string config_fingerprint(const Topology& t, const LatencyModel& l, std::string_view extra = {}) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_config(t, l) + std::string(extra))));
    return buf;
}

// ---- latency ----

/// Activation time of every hop of the longest chain, measured by sending one
/// START per hop through a fresh simulator.
inline Report latency_report(const Topology& topology, const LatencyModel& latency, std::uint64_t seed = 0) {
    topology.validate();
    latency.validate();
    Report r;
    r.kind = ReportKind::latency;
    r.fingerprint = config_fingerprint(topology, latency, ";seed=" + std::to_string(seed));
    int chain = 0;
    for (int c = 0; c < topology.chain_count(); ++c)
        if (topology.chain_lengths[static_cast<std::size_t>(c)] > topology.chain_lengths[static_cast<std::size_t>(chain)]) chain = c;
    const int len = topology.chain_lengths[static_cast<std::size_t>(chain)];
    r.columns = {"hop", "activation_ms", "hop_share_ms"};
    double last = 0;
    for (int h = 0; h < len; ++h) {
        ChainSimulator sim(topology, latency, seed);
        sim.inject_packet(chain, {VibrationCommand::start(h, 15, 2)}, 0);
        sim.run_all();
        double t_ms = -1;
        for (const auto& e : sim.log()) {
            if (e.type == SimEventType::start && e.unit == h && e.chain == chain) {
                t_ms = static_cast<double>(e.t_us) / 1000.0;
                break;
            }
        }
        if (t_ms < 0) throw ValidationError("hop " + std::to_string(h) + " never activated");
        r.rows.push_back({std::to_string(h), {t_ms, t_ms - static_cast<double>(sim.packets()[0].arrival_us) / 1000.0}});
        last = t_ms;
    }
    r.summary = {{"chain", static_cast<double>(chain)},
                 {"chain_length", static_cast<double>(len)},
                 {"ble_one_way_ms", latency.ble_one_way_ms},
                 {"hop_us", latency.hop_us},
                 {"model_total_ms", latency.ble_one_way_ms + len * latency.hop_us / 1000.0},
                 {"total_ms", last}};
    return r;
}

// ---- bandwidth ----

struct BandwidthParams {
    int packets = 1000;
    int commands_per_packet = 5;
};

/// Schedules `packets` ticks of commands spread over every unit, dispatches
/// them into the simulator and reports loss and delivery rate.
inline Report bandwidth_report(const Topology& topology, const LatencyModel& latency, const BandwidthParams& p = {},
                               std::uint64_t seed = 0) {
    topology.validate();
    latency.validate();
    if (p.packets < 1 || p.commands_per_packet < 1) throw ValidationError("bandwidth run needs packets and commands");
    std::vector<UnitAddress> units;
    for (int c = 0; c < topology.chain_count(); ++c)
        for (int a = 0; a < topology.chain_lengths[static_cast<std::size_t>(c)]; ++a) units.push_back({c, a});
    CommandStream stream;
    std::size_t next = 0;
    for (int k = 0; k < p.packets; ++k) {
        for (int i = 0; i < p.commands_per_packet; ++i) {
            const auto u = units[next++ % units.size()];
            stream.push_back({k * kTickMs, u.chain, VibrationCommand::start(u.address, k % 16, i % 8)});
        }
    }
    sort_commands(stream);
    const auto sched = schedule(stream);
    ChainSimulator sim(topology, latency, seed);
    SimLoopbackEndpoint ep(sim);
    const auto delivery = dispatch(sched.packets, ep);
    sim.run_all();
    const auto counts = sim.outcome_counts();
    const double rate = measured_delivery_rate(sim);
    double span_s = 0;
    if (!sim.packets().empty()) {
        span_s = static_cast<double>(sim.packets().back().launch_us - sim.packets().front().launch_us) / 1e6;
    }

    Report r;
    r.kind = ReportKind::bandwidth;
    r.fingerprint = config_fingerprint(topology, latency,
                                       ";seed=" + std::to_string(seed) + ";packets=" + std::to_string(p.packets) +
                                           ";per_packet=" + std::to_string(p.commands_per_packet));
    r.summary = {{"commands_sent", static_cast<double>(stream.size())},
                 {"packets_dispatched", static_cast<double>(delivery.packets)},
                 {"commands_delivered", static_cast<double>(counts.consumed + counts.exited)},
                 {"commands_lost", static_cast<double>(counts.dropped + counts.in_flight)},
                 {"spilled_commands", static_cast<double>(sched.spills.size())},
                 {"max_backlog", static_cast<double>(sched.max_backlog())},
                 {"send_rate_packets_per_s", delivery.rate_packets_per_s()},
                 {"delivery_rate_packets_per_s", rate},
                 {"launch_span_s", span_s}};
    r.columns = {"unit_refresh", "per_unit_hz"};
    // Refresh rate a single unit could sustain when sharing the link with n others.
    for (int n : {1, 5, 10, 16, 32, 64, 128}) {
        if (n > topology.unit_count()) break;
        r.rows.push_back({std::to_string(n), {std::min(1.0, 5.0 / n) * (1000.0 / kTickMs)}});
    }
    return r;
}

// ---- battery ----

inline Report battery_report(const std::vector<BatteryScenario>& extra = {}) {
    auto scenarios = reference_battery_scenarios();
    scenarios.insert(scenarios.end(), extra.begin(), extra.end());
    Report r;
    r.kind = ReportKind::power;
    std::string canon;
    for (const auto& s : scenarios) {
        canon += s.label + ":" + std::to_string(s.units) + ":" + format_number(s.always_on) + ":" +
                 format_number(s.capacity_mah) + ";";
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
    r.fingerprint = buf;
    r.columns = {"scenario", "units", "always_on", "capacity_mah", "current_ma", "battery_h"};
    for (const auto& s : scenarios) {
        const auto e = estimate_power(s.units, s.always_on, s.capacity_mah);
        r.rows.push_back({s.label, {static_cast<double>(s.units), s.always_on, s.capacity_mah, e.current_a * 1000.0,
                                    e.battery_hours}});
    }
    r.summary = {{"baseline_ma", Electrical::control_unit_current_a * 1000.0},
                 {"mcu_idle_ma", Electrical::mcu_current_a * 1000.0},
                 {"actuator_ma", Electrical::actuator_current_a * 1000.0}};
    return r;
}

// ---- voltage sweep ----

inline constexpr int kDefaultSweepLength = 18;

/// Voltages at the last unit of a `chain_len` chain as 0..chain_len units
/// switch on head-first, in OPEN and CLOSED mode, with the first rows that
/// fall below the MCU and actuator thresholds annotated.
inline Report voltage_sweep(const Topology& topology, int chain_len = kDefaultSweepLength) {
    topology.wires.validate();
    if (chain_len < 1) throw ValidationError("sweep chain length must be >= 1");
    Report r;
    r.kind = ReportKind::voltage_sweep;
    r.fingerprint = config_fingerprint(topology, LatencyModel{}, ";sweep=" + std::to_string(chain_len));
    r.columns = {"active", "v_mcu_open", "v_act_open", "v_mcu_closed", "v_act_closed"};
    int mcu_cross = -1, act_cross = -1;
    for (int k = 0; k <= chain_len; ++k) {
        const auto open = sweep_point(topology.wires, LoopMode::open, chain_len, k, topology.supply_voltage_v);
        const auto closed = sweep_point(topology.wires, LoopMode::closed, chain_len, k, topology.supply_voltage_v);
        r.rows.push_back({std::to_string(k), {open.mcu_v, open.actuator_v, closed.mcu_v, closed.actuator_v}});
        if (mcu_cross < 0 && open.mcu_v < Electrical::mcu_min_voltage_v) {
            mcu_cross = k;
            r.annotations.push_back({std::to_string(k), "mcu_below_2.3V"});
        }
        if (act_cross < 0 && open.actuator_v < Electrical::actuator_rated_voltage_v) {
            act_cross = k;
            r.annotations.push_back({std::to_string(k), "actuator_below_0.9V"});
        }
    }
    r.summary = {{"chain_length", static_cast<double>(chain_len)},
                 {"mcu_threshold_v", Electrical::mcu_min_voltage_v},
                 {"actuator_threshold_v", Electrical::actuator_rated_voltage_v},
                 {"mcu_crossing_active", static_cast<double>(mcu_cross)},
                 {"actuator_crossing_active", static_cast<double>(act_cross)}};
    return r;
}

}  // namespace vibraforge
