#pragma once

// Waveform composition trees: oscillators, envelopes, sampled clips and
// combinators, sampleable to a discrete signal and persisted as JSON.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vibraforge/commands.hpp"
#include "vibraforge/errors.hpp"
#include "vibraforge/segmentation.hpp"

namespace vibraforge {

using json = nlohmann::json;

struct Keyframe {
    double t_ms = 0;
    double value = 0;
    friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

enum class OscShape { sine, square, triangle, saw };
enum class EnvelopeKind { ramp, cos2, keyframes };
enum class CombineOp { multiply, concat };

struct Oscillator {
    OscShape shape = OscShape::sine;
    double freq_hz = 170;
    double amplitude = 1;
    double phase = 0;                      // radians
    std::vector<Keyframe> freq_keyframes;  // piecewise-linear Hz over ms; overrides freq_hz
    std::optional<double> duration_ms;     // unbounded when absent
    friend bool operator==(const Oscillator&, const Oscillator&) = default;
};

struct Envelope {
    EnvelopeKind kind = EnvelopeKind::keyframes;
    double duration_ms = 0;  // ramp and cos2
    double from = 0, to = 1;  // ramp end values
    std::vector<Keyframe> keyframes;
    friend bool operator==(const Envelope&, const Envelope&) = default;
};

struct SampledClip {
    SampledWaveform clip;
    friend bool operator==(const SampledClip&, const SampledClip&) = default;
};

struct Waveform;

struct Combinator {
    CombineOp op = CombineOp::multiply;
    std::vector<Waveform> children;
    friend bool operator==(const Combinator&, const Combinator&);
};

struct Waveform {
    std::variant<Oscillator, Envelope, SampledClip, Combinator> node;

    static Waveform oscillator(OscShape shape, double hz, double amplitude = 1, double phase = 0) {
        return {Oscillator{shape, hz, amplitude, phase, {}, std::nullopt}};
    }
    static Waveform ramp(double duration_ms, double from = 0, double to = 1) {
        return {Envelope{EnvelopeKind::ramp, duration_ms, from, to, {}}};
    }
    static Waveform cos2(double duration_ms) { return {Envelope{EnvelopeKind::cos2, duration_ms, 0, 1, {}}}; }
    static Waveform keyframes(std::vector<Keyframe> k) { return {Envelope{EnvelopeKind::keyframes, 0, 0, 1, std::move(k)}}; }
    static Waveform multiply(std::vector<Waveform> c) { return {Combinator{CombineOp::multiply, std::move(c)}}; }
    static Waveform concat(std::vector<Waveform> c) { return {Combinator{CombineOp::concat, std::move(c)}}; }

    friend bool operator==(const Waveform&, const Waveform&) = default;
};

inline bool operator==(const Combinator& a, const Combinator& b) { return a.op == b.op && a.children == b.children; }

namespace detail {

inline void check_keyframes(const std::vector<Keyframe>& k, const char* what, double lo, double hi) {
    if (k.empty()) throw ValidationError(std::string(what) + ": keyframe list is empty");
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (!std::isfinite(k[i].t_ms) || k[i].t_ms < 0) throw ValidationError(std::string(what) + ": negative time");
        if (i > 0 && !(k[i].t_ms > k[i - 1].t_ms)) {
            throw ValidationError(std::string(what) + ": keyframe times must be strictly increasing");
        }
        if (!(k[i].value >= lo && k[i].value <= hi)) {
            throw ValidationError(std::string(what) + "[" + std::to_string(i) + "]: value " +
                                  format_number(k[i].value) + " outside [" + format_number(lo) + ", " +
                                  format_number(hi) + "]");
        }
    }
}

// Piecewise-linear interpolation, held flat outside the keyframe range.
inline double interpolate(const std::vector<Keyframe>& k, double t_ms) {
    if (t_ms <= k.front().t_ms) return k.front().value;
    if (t_ms >= k.back().t_ms) return k.back().value;
    auto it = std::upper_bound(k.begin(), k.end(), t_ms, [](double t, const Keyframe& f) { return t < f.t_ms; });
    const auto& b = *it;
    const auto& a = *std::prev(it);
    return a.value + (b.value - a.value) * (t_ms - a.t_ms) / (b.t_ms - a.t_ms);
}

// Integral of piecewise-linear frequency (Hz) from 0 to t_ms, in cycles.
inline double integrate_cycles(const std::vector<Keyframe>& k, double t_ms) {
    double cycles = 0;
    double prev_t = 0, prev_f = interpolate(k, 0);
    auto add_to = [&](double t) {
        const double f = interpolate(k, t);
        cycles += 0.5 * (prev_f + f) * (t - prev_t) / 1000.0;
        prev_t = t;
        prev_f = f;
    };
    for (const auto& f : k) {
        if (f.t_ms <= 0) continue;
        if (f.t_ms >= t_ms) break;
        add_to(f.t_ms);
    }
    if (t_ms > prev_t) add_to(t_ms);
    return cycles;
}

inline double shape_value(OscShape s, double phase) {
    switch (s) {
        case OscShape::sine: return std::sin(phase);
        case OscShape::square: return std::sin(phase) >= 0 ? 1.0 : -1.0;
        case OscShape::triangle: return 2.0 / std::numbers::pi * std::asin(std::sin(phase));
        case OscShape::saw: {
            const double c = phase / (2 * std::numbers::pi);
            return 2.0 * (c - std::floor(c + 0.5));
        }
    }
    return 0;
}

}  // namespace detail

/// Length in ms, or nullopt for an unbounded node.
inline std::optional<double> duration_ms(const Waveform& w) {
    struct V {
        std::optional<double> operator()(const Oscillator& o) const { return o.duration_ms; }
        std::optional<double> operator()(const Envelope& e) const {
            if (e.kind == EnvelopeKind::keyframes) return e.keyframes.empty() ? 0.0 : e.keyframes.back().t_ms;
            return e.duration_ms;
        }
        std::optional<double> operator()(const SampledClip& c) const { return 1000.0 * c.clip.duration_s(); }
        std::optional<double> operator()(const Combinator& c) const {
            std::optional<double> out;
            for (const auto& ch : c.children) {
                const auto d = duration_ms(ch);
                if (c.op == CombineOp::multiply) {
                    if (d) out = out ? std::min(*out, *d) : *d;
                } else {
                    if (!d) return std::nullopt;
                    out = out.value_or(0) + *d;
                }
            }
            return out;
        }
    };
    return std::visit(V{}, w.node);
}

/// Highest oscillator frequency anywhere in the tree (sampled clips count as
/// their Nyquist frequency).
inline double max_frequency_hz(const Waveform& w) {
    struct V {
        double operator()(const Oscillator& o) const {
            double f = o.freq_keyframes.empty() ? o.freq_hz : 0.0;
            for (const auto& k : o.freq_keyframes) f = std::max(f, k.value);
            return f;
        }
        double operator()(const Envelope&) const { return 0; }
        double operator()(const SampledClip& c) const { return c.clip.sample_rate_hz / 2; }
        double operator()(const Combinator& c) const {
            double f = 0;
            for (const auto& ch : c.children) f = std::max(f, max_frequency_hz(ch));
            return f;
        }
    };
    return std::visit(V{}, w.node);
}

inline void validate(const Waveform& w, int depth = 0) {
    if (depth > 64) throw ValidationError("waveform tree nested too deeply");
    struct V {
        int depth;
        void operator()(const Oscillator& o) const {
            if (!(o.amplitude >= 0 && o.amplitude <= 1)) throw ValidationError("oscillator amplitude outside [0, 1]");
            if (!std::isfinite(o.phase)) throw ValidationError("oscillator phase must be finite");
            if (o.freq_keyframes.empty()) {
                if (!(o.freq_hz > 0) || !std::isfinite(o.freq_hz)) throw ValidationError("oscillator frequency must be > 0");
            } else {
                detail::check_keyframes(o.freq_keyframes, "freq_keyframes", 0, 1e6);
            }
            if (o.duration_ms && !(*o.duration_ms > 0)) throw ValidationError("duration_ms must be > 0");
        }
        void operator()(const Envelope& e) const {
            if (e.kind == EnvelopeKind::keyframes) {
                detail::check_keyframes(e.keyframes, "keyframes", 0, 1);
                return;
            }
            if (!(e.duration_ms > 0) || !std::isfinite(e.duration_ms)) throw ValidationError("envelope duration_ms must be > 0");
            if (!(e.from >= 0 && e.from <= 1 && e.to >= 0 && e.to <= 1)) throw ValidationError("ramp values outside [0, 1]");
        }
        void operator()(const SampledClip& c) const {
            if (c.clip.samples.empty()) throw ValidationError("sampled clip is empty");
            c.clip.validate();
        }
        void operator()(const Combinator& c) const {
            if (c.children.empty()) throw ValidationError("combinator needs at least one child");
            for (const auto& ch : c.children) {
                validate(ch, depth + 1);
                if (c.op == CombineOp::concat && !duration_ms(ch)) {
                    throw ValidationError("every CONCAT child must have a finite duration");
                }
            }
        }
    };
    std::visit(V{depth}, w.node);
}

/// Value at t_ms after the node's start. Bounded nodes are zero outside
/// [0, duration).
inline double evaluate(const Waveform& w, double t_ms) {
    struct V {
        double t;
        double operator()(const Oscillator& o) const {
            if (t < 0 || (o.duration_ms && t >= *o.duration_ms)) return 0;
            const double cycles = o.freq_keyframes.empty() ? o.freq_hz * t / 1000.0
                                                           : detail::integrate_cycles(o.freq_keyframes, t);
            return o.amplitude * detail::shape_value(o.shape, 2 * std::numbers::pi * cycles + o.phase);
        }
        double operator()(const Envelope& e) const {
            if (t < 0) return 0;
            switch (e.kind) {
                case EnvelopeKind::ramp:
                    return t >= e.duration_ms ? 0 : e.from + (e.to - e.from) * t / e.duration_ms;
                case EnvelopeKind::cos2: {
                    if (t >= e.duration_ms) return 0;
                    const double c = std::cos(std::numbers::pi * (t / e.duration_ms - 0.5));
                    return c * c;
                }
                case EnvelopeKind::keyframes:
                    return t > e.keyframes.back().t_ms ? 0 : detail::interpolate(e.keyframes, t);
            }
            return 0;
        }
        double operator()(const SampledClip& c) const {
            const auto& s = c.clip.samples;
            const double pos = t / 1000.0 * c.clip.sample_rate_hz;
            if (pos < 0 || pos > static_cast<double>(s.size() - 1)) return 0;
            const auto i = static_cast<std::size_t>(pos);
            if (i + 1 >= s.size()) return s[i];
            return s[i] + (s[i + 1] - s[i]) * (pos - static_cast<double>(i));
        }
        double operator()(const Combinator& c) const {
            if (c.op == CombineOp::multiply) {
                // Bounded children are already zero past their end.
                double v = 1;
                for (const auto& ch : c.children) v *= evaluate(ch, t);
                return v;
            }
            double offset = 0;
            for (const auto& ch : c.children) {
                const double d = *duration_ms(ch);
                if (t < offset + d) return evaluate(ch, t - offset);
                offset += d;
            }
            return 0;
        }
    };
    return std::visit(V{t_ms}, w.node);
}

/// Sample `duration_ms` of the waveform at `rate_hz`, clipped to [-1, 1].
inline SampledWaveform sample(const Waveform& w, double rate_hz, double duration_ms) {
    validate(w);
    if (!(rate_hz > 0)) throw ValidationError("sample rate must be positive");
    const double fmax = max_frequency_hz(w);
    if (rate_hz < 2 * fmax) {
        throw AliasingError("sample rate " + format_number(rate_hz) + " Hz is below twice the highest frequency " +
                            format_number(fmax) + " Hz");
    }
    if (!(duration_ms >= 0)) throw ValidationError("duration must be >= 0");
    SampledWaveform out;
    out.sample_rate_hz = rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(duration_ms * rate_hz / 1000.0));
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.samples[i] = std::clamp(evaluate(w, 1000.0 * static_cast<double>(i) / rate_hz), -1.0, 1.0);
    }
    return out;
}

// ---- JSON ----

inline const char* to_string(OscShape s) {
    switch (s) {
        case OscShape::sine: return "sine";
        case OscShape::square: return "square";
        case OscShape::triangle: return "triangle";
        case OscShape::saw: return "saw";
    }
    return "sine";
}

inline const char* to_string(EnvelopeKind k) {
    switch (k) {
        case EnvelopeKind::ramp: return "ramp";
        case EnvelopeKind::cos2: return "cos2";
        case EnvelopeKind::keyframes: return "keyframes";
    }
    return "keyframes";
}

namespace detail {

inline json keyframes_json(const std::vector<Keyframe>& k) {
    json a = json::array();
    for (const auto& f : k) a.push_back(json::array({f.t_ms, f.value}));
    return a;
}

inline const json& field(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) throw ParseError(path + ": missing field `" + key + "`");
    return j.at(key);
}

inline double number_field(const json& j, const std::string& path, const char* key) {
    const auto& v = field(j, path, key);
    if (!v.is_number()) throw ParseError(path + "." + key + ": expected a number");
    return v.get<double>();
}

inline std::vector<Keyframe> keyframes_from_json(const json& j, const std::string& path) {
    if (!j.is_array()) throw ParseError(path + ": expected an array of [t_ms, value] pairs");
    if (j.empty()) throw ParseError(path + ": keyframe list is empty");
    std::vector<Keyframe> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& p = j[i];
        const std::string where = path + "[" + std::to_string(i) + "]";
        if (p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number()) {
            out.push_back({p[0].get<double>(), p[1].get<double>()});
        } else if (p.is_object()) {
            out.push_back({number_field(p, where, "t_ms"), number_field(p, where, "value")});
        } else {
            throw ParseError(where + ": expected [t_ms, value]");
        }
    }
    return out;
}

}  // namespace detail

inline json to_json(const Waveform& w) {
    struct V {
        json operator()(const Oscillator& o) const {
            json j{{"type", "oscillator"}, {"shape", to_string(o.shape)}, {"amplitude", o.amplitude}, {"phase", o.phase}};
            if (o.freq_keyframes.empty()) {
                j["freq_hz"] = o.freq_hz;
            } else {
                j["freq_keyframes"] = detail::keyframes_json(o.freq_keyframes);
            }
            if (o.duration_ms) j["duration_ms"] = *o.duration_ms;
            return j;
        }
        json operator()(const Envelope& e) const {
            json j{{"type", "envelope"}, {"kind", to_string(e.kind)}};
            if (e.kind == EnvelopeKind::keyframes) {
                j["keyframes"] = detail::keyframes_json(e.keyframes);
            } else {
                j["duration_ms"] = e.duration_ms;
            }
            if (e.kind == EnvelopeKind::ramp) {
                j["from"] = e.from;
                j["to"] = e.to;
            }
            return j;
        }
        json operator()(const SampledClip& c) const {
            return json{{"type", "samples"}, {"rate_hz", c.clip.sample_rate_hz}, {"samples", c.clip.samples}};
        }
        json operator()(const Combinator& c) const {
            json kids = json::array();
            for (const auto& ch : c.children) kids.push_back(to_json(ch));
            return json{{"type", c.op == CombineOp::multiply ? "multiply" : "concat"}, {"children", kids}};
        }
    };
    return std::visit(V{}, w.node);
}

inline Waveform waveform_from_json(const json& j, const std::string& path = "waveform") {
    if (!j.is_object()) throw ParseError(path + ": expected an object");
    const auto& type_v = detail::field(j, path, "type");
    if (!type_v.is_string()) throw ParseError(path + ".type: expected a string");
    const auto type = type_v.get<std::string>();
    if (type == "oscillator") {
        Oscillator o;
        const auto shape = j.value("shape", std::string("sine"));
        if (shape == "sine") o.shape = OscShape::sine;
        else if (shape == "square") o.shape = OscShape::square;
        else if (shape == "triangle") o.shape = OscShape::triangle;
        else if (shape == "saw") o.shape = OscShape::saw;
        else throw ParseError(path + ".shape: unknown shape `" + shape + "`");
        if (j.contains("freq_keyframes")) {
            o.freq_keyframes = detail::keyframes_from_json(j["freq_keyframes"], path + ".freq_keyframes");
        } else {
            o.freq_hz = detail::number_field(j, path, "freq_hz");
        }
        if (j.contains("amplitude")) o.amplitude = detail::number_field(j, path, "amplitude");
        if (j.contains("phase")) o.phase = detail::number_field(j, path, "phase");
        if (j.contains("duration_ms")) o.duration_ms = detail::number_field(j, path, "duration_ms");
        return {o};
    }
    if (type == "envelope") {
        Envelope e;
        const auto& kind_v = detail::field(j, path, "kind");
        const auto kind = kind_v.is_string() ? kind_v.get<std::string>() : std::string();
        if (kind == "keyframes") {
            e.kind = EnvelopeKind::keyframes;
            e.keyframes = detail::keyframes_from_json(detail::field(j, path, "keyframes"), path + ".keyframes");
        } else if (kind == "ramp" || kind == "cos2") {
            e.kind = kind == "ramp" ? EnvelopeKind::ramp : EnvelopeKind::cos2;
            e.duration_ms = detail::number_field(j, path, "duration_ms");
            if (j.contains("from")) e.from = detail::number_field(j, path, "from");
            if (j.contains("to")) e.to = detail::number_field(j, path, "to");
        } else {
            throw ParseError(path + ".kind: expected ramp, cos2 or keyframes");
        }
        return {e};
    }
    if (type == "samples") {
        SampledClip c;
        c.clip.sample_rate_hz = detail::number_field(j, path, "rate_hz");
        const auto& s = detail::field(j, path, "samples");
        if (!s.is_array()) throw ParseError(path + ".samples: expected an array");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s[i].is_number()) throw ParseError(path + ".samples[" + std::to_string(i) + "]: expected a number");
            c.clip.samples.push_back(s[i].get<double>());
        }
        return {c};
    }
    if (type == "multiply" || type == "concat") {
        Combinator c;
        c.op = type == "multiply" ? CombineOp::multiply : CombineOp::concat;
        const auto& kids = detail::field(j, path, "children");
        if (!kids.is_array()) throw ParseError(path + ".children: expected an array");
        for (std::size_t i = 0; i < kids.size(); ++i) {
            c.children.push_back(waveform_from_json(kids[i], path + ".children[" + std::to_string(i) + "]"));
        }
        return {c};
    }
    throw ParseError(path + ".type: unknown node type `" + type + "`");
}

// ---- keyframe-JSON import/export ----
//
// {"amplitude": [[t_ms, a], ...], "frequency": [[t_ms, hz], ...], "shape": "sine"}
// `amplitude` (alias `amp`) is required; without `frequency` the carrier is
// 170 Hz. Imports to MULTIPLY(OSCILLATOR, ENVELOPE(KEYFRAMES)).

inline constexpr double kDefaultCarrierHz = 170.0;

inline Waveform import_keyframes(const json& doc) {
    if (!doc.is_object()) throw ParseError("keyframe document: expected an object");
    const char* amp_key = doc.contains("amplitude") ? "amplitude" : "amp";
    if (!doc.contains(amp_key)) throw ParseError("keyframe document: missing field `amplitude`");
    Envelope env;
    env.kind = EnvelopeKind::keyframes;
    env.keyframes = detail::keyframes_from_json(doc[amp_key], amp_key);
    Oscillator osc;
    const auto shape = doc.value("shape", std::string("sine"));
    Waveform probe = waveform_from_json(json{{"type", "oscillator"}, {"shape", shape}, {"freq_hz", 1.0}});
    osc.shape = std::get<Oscillator>(probe.node).shape;
    if (doc.contains("frequency")) {
        osc.freq_keyframes = detail::keyframes_from_json(doc["frequency"], "frequency");
    } else {
        osc.freq_hz = kDefaultCarrierHz;
    }
    Waveform w = Waveform::multiply({Waveform{osc}, Waveform{env}});
    validate(w);
    return w;
}

inline Waveform import_keyframes(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("keyframe document: ") + e.what(), static_cast<long long>(e.byte));
    }
    return import_keyframes(doc);
}
inline Waveform import_keyframes(const char* text) { return import_keyframes(std::string_view(text)); }
inline Waveform import_keyframes(const std::string& text) { return import_keyframes(std::string_view(text)); }

/// Inverse of import_keyframes for waveforms of that shape.
inline json export_keyframes(const Waveform& w) {
    const auto* c = std::get_if<Combinator>(&w.node);
    if (!c || c->op != CombineOp::multiply || c->children.size() != 2) {
        throw ValidationError("only OSCILLATOR x KEYFRAMES waveforms export to keyframe-JSON");
    }
    const auto* o = std::get_if<Oscillator>(&c->children[0].node);
    const auto* e = std::get_if<Envelope>(&c->children[1].node);
    if (!o || !e || e->kind != EnvelopeKind::keyframes || o->amplitude != 1 || o->phase != 0 || o->duration_ms) {
        throw ValidationError("only OSCILLATOR x KEYFRAMES waveforms export to keyframe-JSON");
    }
    json j{{"amplitude", detail::keyframes_json(e->keyframes)}};
    if (!o->freq_keyframes.empty()) {
        j["frequency"] = detail::keyframes_json(o->freq_keyframes);
    } else if (o->freq_hz != kDefaultCarrierHz) {
        j["frequency"] = json::array({json::array({0.0, o->freq_hz})});
    }
    if (o->shape != OscShape::sine) j["shape"] = to_string(o->shape);
    return j;
}

}  // namespace vibraforge
