#pragma once

// Topology files (JSON), documented in docs/topology.md.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "vibraforge/errors.hpp"
#include "vibraforge/topology.hpp"

namespace vibraforge {

using json = nlohmann::json;

struct SystemConfig {
    Topology topology;
    LatencyModel latency;
};

namespace detail {

inline double cfg_number(const json& j, const char* path, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ParseError(std::string(path) + "." + key + ": expected a number");
    return j[key].get<double>();
}

}  // namespace detail

inline json to_json(const SystemConfig& c) {
    json modes = json::array();
    for (std::size_t i = 0; i < c.topology.chain_lengths.size(); ++i) {
        modes.push_back(to_string(c.topology.loop_mode(static_cast<int>(i))));
    }
    return {{"chains", c.topology.chain_lengths},
            {"loop_modes", modes},
            {"supply_voltage_v", c.topology.supply_voltage_v},
            {"wires",
             {{"mcu_line_ohm", c.topology.wires.mcu_line_ohm},
              {"actuator_line_ohm", c.topology.wires.actuator_line_ohm},
              {"ground_ohm", c.topology.wires.ground_ohm},
              {"loop_return_segments", c.topology.wires.loop_return_segments}}},
            {"latency",
             {{"ble_one_way_ms", c.latency.ble_one_way_ms},
              {"hop_us", c.latency.hop_us},
              {"ble_processing_ms", c.latency.ble_processing_ms},
              {"ble_jitter_us", c.latency.ble_jitter_us}}}};
}

/// Missing optional fields keep their defaults. Validates the result.
inline SystemConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("topology: expected an object");
    SystemConfig c;
    if (!j.contains("chains") || !j["chains"].is_array()) throw ParseError("topology.chains: expected an array of chain lengths");
    for (std::size_t i = 0; i < j["chains"].size(); ++i) {
        const auto& v = j["chains"][i];
        if (!v.is_number_integer()) throw ParseError("topology.chains[" + std::to_string(i) + "]: expected an integer");
        c.topology.chain_lengths.push_back(v.get<int>());
    }
    if (j.contains("loop_modes")) {
        const auto& m = j["loop_modes"];
        if (!m.is_array()) throw ParseError("topology.loop_modes: expected an array");
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto s = m[i].is_string() ? m[i].get<std::string>() : std::string();
            if (s == "open") c.topology.loop_modes.push_back(LoopMode::open);
            else if (s == "closed") c.topology.loop_modes.push_back(LoopMode::closed);
            else throw ParseError("topology.loop_modes[" + std::to_string(i) + "]: expected \"open\" or \"closed\"");
        }
    }
    c.topology.supply_voltage_v = detail::cfg_number(j, "topology", "supply_voltage_v", c.topology.supply_voltage_v);
    if (j.contains("wires")) {
        const auto& w = j["wires"];
        if (!w.is_object()) throw ParseError("topology.wires: expected an object");
        auto& m = c.topology.wires;
        m.mcu_line_ohm = detail::cfg_number(w, "topology.wires", "mcu_line_ohm", m.mcu_line_ohm);
        m.actuator_line_ohm = detail::cfg_number(w, "topology.wires", "actuator_line_ohm", m.actuator_line_ohm);
        m.ground_ohm = detail::cfg_number(w, "topology.wires", "ground_ohm", m.ground_ohm);
        m.loop_return_segments = detail::cfg_number(w, "topology.wires", "loop_return_segments", m.loop_return_segments);
    }
    if (j.contains("latency")) {
        const auto& l = j["latency"];
        if (!l.is_object()) throw ParseError("topology.latency: expected an object");
        auto& m = c.latency;
        m.ble_one_way_ms = detail::cfg_number(l, "topology.latency", "ble_one_way_ms", m.ble_one_way_ms);
        m.hop_us = detail::cfg_number(l, "topology.latency", "hop_us", m.hop_us);
        m.ble_processing_ms = detail::cfg_number(l, "topology.latency", "ble_processing_ms", m.ble_processing_ms);
        m.ble_jitter_us = detail::cfg_number(l, "topology.latency", "ble_jitter_us", m.ble_jitter_us);
    }
    c.topology.validate();
    c.latency.validate();
    return c;
}

inline SystemConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("topology: ") + e.what(), static_cast<long long>(e.byte));
    }
    return config_from_json(j);
}

// ---- file helpers shared by the CLI and the service ----

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open `" + path + "`");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read `" + path + "`");
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open `" + path + "` for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("cannot write `" + path + "`");
}

}  // namespace vibraforge
