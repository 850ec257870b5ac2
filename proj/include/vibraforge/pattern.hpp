#pragma once

// Pattern documents: chains of units laid out on a canvas, a waveform
// library, and timeline assignments of waveforms to units. Compiles to a
// time-sorted command stream.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibraforge/commands.hpp"
#include "vibraforge/errors.hpp"
#include "vibraforge/segmentation.hpp"
#include "vibraforge/topology.hpp"
#include "vibraforge/waveform.hpp"

namespace vibraforge {

inline constexpr int kPatternSchemaVersion = 1;
inline constexpr double kCompileSampleRateHz = 44100.0;

/// A unit on the canvas. Coordinates are for display only.
struct CanvasUnit {
    int address = 0;
    double x = 0, y = 0;
    friend bool operator==(const CanvasUnit&, const CanvasUnit&) = default;
};

struct ChainLayout {
    std::vector<CanvasUnit> units;
    friend bool operator==(const ChainLayout&, const ChainLayout&) = default;
};

struct Assignment {
    UnitAddress unit;
    std::string waveform_id;
    double t_start_ms = 0;
    double t_end_ms = 0;
    friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct PatternDocument {
    std::string name;
    std::vector<ChainLayout> chains;
    std::vector<Assignment> assignments;
    std::map<std::string, Waveform> waveform_library;

    friend bool operator==(const PatternDocument&, const PatternDocument&) = default;

    void validate() const {
        if (chains.size() > static_cast<std::size_t>(kMaxChains)) {
            throw CapacityError("chains: at most 8 chains, got " + std::to_string(chains.size()));
        }
        for (std::size_t c = 0; c < chains.size(); ++c) {
            const auto& units = chains[c].units;
            const std::string where = "chains[" + std::to_string(c) + "]";
            if (units.empty()) throw ValidationError(where + ": chain has no units");
            if (units.size() > static_cast<std::size_t>(kMaxUnitsPerChain)) {
                throw CapacityError(where + ": at most 16 units per chain, got " + std::to_string(units.size()));
            }
            for (std::size_t i = 0; i < units.size(); ++i) {
                if (units[i].address != static_cast<int>(i)) {
                    throw ValidationError(where + ".units[" + std::to_string(i) + "]: address must equal position " +
                                          std::to_string(i));
                }
            }
        }
        for (const auto& [id, w] : waveform_library) {
            try {
                vibraforge::validate(w);
            } catch (const ValidationError& e) {
                throw ValidationError("waveforms." + id + ": " + e.what());
            }
        }
        std::map<UnitAddress, std::vector<std::pair<double, double>>> spans;
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            const auto& a = assignments[i];
            const std::string where = "assignments[" + std::to_string(i) + "]";
            if (a.unit.chain < 0 || a.unit.chain >= static_cast<int>(chains.size()) || a.unit.address < 0 ||
                a.unit.address >= static_cast<int>(chains[static_cast<std::size_t>(a.unit.chain)].units.size())) {
                throw ValidationError(where + ": unit does not exist");
            }
            if (!waveform_library.contains(a.waveform_id)) {
                throw ValidationError(where + ": unknown waveform `" + a.waveform_id + "`");
            }
            if (!(a.t_start_ms >= 0) || !std::isfinite(a.t_end_ms) || !(a.t_start_ms < a.t_end_ms)) {
                throw ValidationError(where + ": need 0 <= t_start_ms < t_end_ms");
            }
            spans[a.unit].emplace_back(a.t_start_ms, a.t_end_ms);
        }
        for (auto& [unit, list] : spans) {
            std::sort(list.begin(), list.end());
            for (std::size_t i = 1; i < list.size(); ++i) {
                if (list[i].first < list[i - 1].second) {
                    throw OverlapError("assignments overlap on chain " + std::to_string(unit.chain) + " unit " +
                                       std::to_string(unit.address));
                }
            }
        }
    }

    /// End of the last assignment.
    double duration_ms() const {
        double d = 0;
        for (const auto& a : assignments) d = std::max(d, a.t_end_ms);
        return d;
    }

    int unit_count() const {
        int n = 0;
        for (const auto& c : chains) n += static_cast<int>(c.units.size());
        return n;
    }

    /// Physical topology mirrored by the canvas.
    Topology topology() const {
        Topology t;
        for (const auto& c : chains) t.chain_lengths.push_back(static_cast<int>(c.units.size()));
        t.loop_modes.assign(chains.size(), LoopMode::open);
        return t;
    }
};

struct CanvasPoint {
    double x = 0, y = 0;
};

/// Append a chain of `chain_len` units laid out left to right from `origin`.
inline PatternDocument create_chain_grid(PatternDocument doc, int chain_len, CanvasPoint origin = {},
                                         double spacing = 1.0) {
    if (doc.chains.size() >= static_cast<std::size_t>(kMaxChains)) throw CapacityError("at most 8 chains");
    if (chain_len < 1) throw ValidationError("chain length must be >= 1");
    if (chain_len > kMaxUnitsPerChain) throw CapacityError("at most 16 units per chain");
    ChainLayout chain;
    for (int i = 0; i < chain_len; ++i) chain.units.push_back({i, origin.x + spacing * i, origin.y});
    doc.chains.push_back(std::move(chain));
    return doc;
}

/// Units whose assignment interval [t_start, t_end) contains t.
inline std::set<UnitAddress> active_units_at(const PatternDocument& doc, double t_ms) {
    std::set<UnitAddress> out;
    for (const auto& a : doc.assignments) {
        if (a.t_start_ms <= t_ms && t_ms < a.t_end_ms) out.insert(a.unit);
    }
    return out;
}

/// Commands for one assignment. The unit is started at t_start with the
/// first frame's levels and stays on until t_end; frames below the silence
/// floor play at intensity 0. A START is emitted only when the
/// (intensity, frequency) pair changes, and a single STOP at t_end.
inline CommandStream compile_assignment(const Assignment& a, const Waveform& w,
                                        double rate_hz = kCompileSampleRateHz) {
    const double len = a.t_end_ms - a.t_start_ms;
    const auto samples = sample(w, rate_hz, len);
    CommandStream out;
    if (!samples.samples.empty()) {
        const auto stream = segment(samples);
        int last_i = -1, last_f = -1;
        for (std::size_t i = 0; i < stream.frames.size(); ++i) {
            const double t = a.t_start_ms + 5.0 * static_cast<double>(i);
            if (t >= a.t_end_ms) break;
            const auto& f = stream.frames[i];
            const int level = f.active ? f.intensity : 0;
            if (level == last_i && f.frequency_index == last_f) continue;
            out.push_back({t, a.unit.chain, VibrationCommand::start(a.unit.address, level, f.frequency_index)});
            last_i = level;
            last_f = f.frequency_index;
        }
    }
    if (out.empty()) {
        out.push_back({a.t_start_ms, a.unit.chain, VibrationCommand::start(a.unit.address, 0, kDefaultFrequencyIndex)});
    }
    out.push_back({a.t_end_ms, a.unit.chain, VibrationCommand::stop(a.unit.address)});
    return out;
}

inline CommandStream compile(const PatternDocument& doc, double rate_hz = kCompileSampleRateHz) {
    doc.validate();
    CommandStream out;
    for (const auto& a : doc.assignments) {
        auto part = compile_assignment(a, doc.waveform_library.at(a.waveform_id), rate_hz);
        out.insert(out.end(), part.begin(), part.end());
    }
    sort_commands(out);
    return out;
}

// ---- importers ----

inline SampledWaveform import_csv(std::string_view text) { return parse_sample_csv(text); }
inline std::string export_csv(const SampledWaveform& w) { return to_sample_csv(w); }

// ---- persistence ----

inline json to_json(const PatternDocument& doc) {
    json chains = json::array();
    for (const auto& c : doc.chains) {
        json units = json::array();
        for (const auto& u : c.units) units.push_back({{"address", u.address}, {"x", u.x}, {"y", u.y}});
        chains.push_back({{"units", units}});
    }
    json assignments = json::array();
    for (const auto& a : doc.assignments) {
        assignments.push_back({{"chain", a.unit.chain},
                               {"address", a.unit.address},
                               {"waveform", a.waveform_id},
                               {"t_start_ms", a.t_start_ms},
                               {"t_end_ms", a.t_end_ms}});
    }
    json lib = json::object();
    for (const auto& [id, w] : doc.waveform_library) lib[id] = to_json(w);
    return {{"schema_version", kPatternSchemaVersion},
            {"name", doc.name},
            {"chains", chains},
            {"assignments", assignments},
            {"waveforms", lib}};
}

namespace detail {

inline int int_field(const json& j, const std::string& path, const char* key) {
    const auto& v = field(j, path, key);
    if (!v.is_number_integer()) throw ParseError(path + "." + key + ": expected an integer");
    return v.get<int>();
}

}  // namespace detail

/// Parse without validating document invariants (see PatternDocument::validate).
inline PatternDocument pattern_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("pattern: expected an object");
    if (j.contains("schema_version") && j["schema_version"] != kPatternSchemaVersion) {
        throw ParseError("pattern.schema_version: unsupported version " + j["schema_version"].dump());
    }
    PatternDocument doc;
    if (j.contains("name")) {
        if (!j["name"].is_string()) throw ParseError("pattern.name: expected a string");
        doc.name = j["name"].get<std::string>();
    }
    const json empty = json::array();
    const auto& chains = j.contains("chains") ? j["chains"] : empty;
    if (!chains.is_array()) throw ParseError("pattern.chains: expected an array");
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const std::string path = "chains[" + std::to_string(c) + "]";
        const auto& units = detail::field(chains[c], path, "units");
        if (!units.is_array()) throw ParseError(path + ".units: expected an array");
        ChainLayout layout;
        for (std::size_t i = 0; i < units.size(); ++i) {
            const std::string up = path + ".units[" + std::to_string(i) + "]";
            CanvasUnit u;
            u.address = units[i].contains("address") ? detail::int_field(units[i], up, "address") : static_cast<int>(i);
            u.x = units[i].contains("x") ? detail::number_field(units[i], up, "x") : 0.0;
            u.y = units[i].contains("y") ? detail::number_field(units[i], up, "y") : 0.0;
            layout.units.push_back(u);
        }
        doc.chains.push_back(std::move(layout));
    }
    const auto& assignments = j.contains("assignments") ? j["assignments"] : empty;
    if (!assignments.is_array()) throw ParseError("pattern.assignments: expected an array");
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        const std::string path = "assignments[" + std::to_string(i) + "]";
        const auto& a = assignments[i];
        Assignment as;
        as.unit.chain = detail::int_field(a, path, "chain");
        as.unit.address = detail::int_field(a, path, "address");
        const auto& wid = detail::field(a, path, "waveform");
        if (!wid.is_string()) throw ParseError(path + ".waveform: expected a string");
        as.waveform_id = wid.get<std::string>();
        as.t_start_ms = detail::number_field(a, path, "t_start_ms");
        as.t_end_ms = detail::number_field(a, path, "t_end_ms");
        doc.assignments.push_back(as);
    }
    if (j.contains("waveforms")) {
        if (!j["waveforms"].is_object()) throw ParseError("pattern.waveforms: expected an object");
        for (const auto& [id, w] : j["waveforms"].items()) doc.waveform_library[id] = waveform_from_json(w, "waveforms." + id);
    }
    return doc;
}

inline PatternDocument parse_pattern(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("pattern: ") + e.what(), static_cast<long long>(e.byte));
    }
    return pattern_from_json(j);
}

inline std::string dump_pattern(const PatternDocument& doc) { return to_json(doc).dump(2) + "\n"; }

}  // namespace vibraforge
