#pragma once

// Editor service: pattern and waveform storage with version checks,
// compilation, and simulated playback sessions streaming 30 Hz state frames.
// Transport-independent; http_server.hpp binds it to HTTP.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibraforge/commands.hpp"
#include "vibraforge/errors.hpp"
#include "vibraforge/pattern.hpp"
#include "vibraforge/scheduler.hpp"
#include "vibraforge/simulator.hpp"
#include "vibraforge/waveform.hpp"

namespace vibraforge {

inline constexpr double kFrameRateUiHz = 30.0;

/// Elapsed time of state frame k, in microseconds.
inline std::int64_t ui_frame_time_us(std::int64_t k) { return (k * 100'000 + 1) / 3; }

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_us() const = 0;
};

class SteadyClock : public Clock {
public:
    std::int64_t now_us() const override {
        return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now().time_since_epoch())
            .count();
    }
};

class ManualClock : public Clock {
public:
    std::int64_t now_us() const override { return t_; }
    void set(std::int64_t t) { t_ = t; }
    void advance(std::int64_t dt) { t_ += dt; }

private:
    std::int64_t t_ = 0;
};

struct Request {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> query;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";

    json json_body() const { return json::parse(body); }
};

/// Frame: the state of every unit at one playback instant.
inline json state_frame(const ChainSimulator& sim, double t_ms) {
    json units = json::array();
    const auto& topo = sim.topology();
    for (int c = 0; c < topo.chain_count(); ++c) {
        for (int a = 0; a < topo.chain_lengths[static_cast<std::size_t>(c)]; ++a) {
            const auto& u = sim.unit(c, a);
            units.push_back({{"chain", c},
                             {"addr", a},
                             {"active", u.vibrating()},
                             {"intensity", u.current ? u.current->intensity : 0},
                             {"freq_idx", u.current ? u.current->frequency_index : 0}});
        }
    }
    return {{"t_ms", t_ms}, {"units", units}};
}

/// Playback plan: compiled commands retimed to start at `from_ms`. Units
/// already inside an assignment at `from_ms` are started with their most
/// recent levels.
inline CommandStream playback_commands(const PatternDocument& doc, double from_ms) {
    doc.validate();
    CommandStream out;
    for (const auto& a : doc.assignments) {
        if (a.t_end_ms <= from_ms) continue;
        const auto part = compile_assignment(a, doc.waveform_library.at(a.waveform_id));
        std::optional<TimedCommand> carried;
        for (const auto& c : part) {
            if (c.t_ms < from_ms) {
                carried = c;
                continue;
            }
            if (carried && c.t_ms > from_ms) {
                out.push_back({0, carried->chain, carried->command});
            }
            carried.reset();
            out.push_back({c.t_ms - from_ms, c.chain, c.command});
        }
    }
    sort_commands(out);
    return out;
}

class Service {
public:
    explicit Service(std::shared_ptr<Clock> clock = std::make_shared<SteadyClock>(), LatencyModel latency = {})
        : clock_(std::move(clock)), latency_(latency) {
        latency_.validate();
    }

    Response handle(const Request& req) {
        std::lock_guard lock(mu_);
        try {
            return route(req);
        } catch (const ParseError& e) {
            return error(400, "parse_error", e.what());
        } catch (const json::exception& e) {
            return error(400, "parse_error", e.what());
        } catch (const Error& e) {
            return error(422, "validation_error", e.what());
        }
    }

    // Direct helpers used by the HTTP streaming endpoint.
    std::int64_t now_us() const { return clock_->now_us(); }

private:
    struct StoredPattern {
        PatternDocument doc;
        int version = 1;
    };

    struct Session {
        std::string pattern_id;
        bool playing = false;
        bool stopping = false;  // STOP_ALL sent; frames run until convergence
        std::int64_t stop_us = 0;
        double from_ms = 0;
        double duration_ms = 0;
        std::int64_t start_us = 0;  // clock time of play
        std::int64_t end_us = 0;    // elapsed time at which playback completes
        std::unique_ptr<ChainSimulator> sim;
        std::vector<WirePacket> packets;
        std::size_t next_packet = 0;
        std::vector<json> frames;
        std::int64_t next_frame = 0;
        bool complete = false;
        double cursor_ms = 0;
    };

    static Response error(int status, const std::string& kind, const std::string& message) {
        return {status, json{{"error", kind}, {"message", message}}.dump(), "application/json"};
    }
    static Response ok(const json& j, int status = 200) { return {status, j.dump(), "application/json"}; }

    static json parse_body(const Request& req) {
        try {
            return json::parse(req.body);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("request body: ") + e.what(), static_cast<long long>(e.byte));
        }
    }

    json pattern_view(const std::string& id, const StoredPattern& p) const {
        return {{"id", id}, {"version", p.version}, {"units", p.doc.unit_count()}, {"document", to_json(p.doc)}};
    }

    static int required_version(const json& body) {
        if (!body.is_object() || !body.contains("version") || !body["version"].is_number_integer()) {
            throw ValidationError("version: required integer precondition");
        }
        return body["version"].get<int>();
    }

    StoredPattern* find_pattern(const std::string& id) {
        auto it = patterns_.find(id);
        return it == patterns_.end() ? nullptr : &it->second;
    }

    Response route(const Request& req) {
        std::smatch m;
        const std::string& p = req.path;
        static const std::regex pattern_re(R"(^/patterns/([A-Za-z0-9_-]+)$)");
        static const std::regex pattern_sub_re(R"(^/patterns/([A-Za-z0-9_-]+)/(compile|chains)$)");
        static const std::regex waveform_re(R"(^/waveforms/([A-Za-z0-9_.-]+)$)");
        static const std::regex waveform_samples_re(R"(^/waveforms/([A-Za-z0-9_.-]+)/samples$)");
        static const std::regex session_re(R"(^/sessions/([A-Za-z0-9_-]+)$)");
        static const std::regex session_sub_re(R"(^/sessions/([A-Za-z0-9_-]+)/(play|stop|scrub|frames)$)");

        if (p == "/patterns") {
            if (req.method == "GET") return list_patterns();
            if (req.method == "POST") return create_pattern(req);
        } else if (std::regex_match(p, m, pattern_re)) {
            const std::string id = m[1];
            if (req.method == "GET") return get_pattern(id);
            if (req.method == "PUT") return update_pattern(id, req);
            if (req.method == "DELETE") return delete_pattern(id, req);
        } else if (std::regex_match(p, m, pattern_sub_re)) {
            const std::string id = m[1], what = m[2];
            if (what == "compile" && req.method == "POST") return compile_pattern(id);
            if (what == "chains" && req.method == "POST") return add_chain(id, req);
        } else if (p == "/waveforms") {
            if (req.method == "GET") return list_waveforms();
            if (req.method == "POST") return import_waveform(req);
        } else if (std::regex_match(p, m, waveform_samples_re)) {
            if (req.method == "GET") return waveform_samples(m[1], req);
        } else if (std::regex_match(p, m, waveform_re)) {
            const std::string name = m[1];
            if (req.method == "GET") return get_waveform(name);
            if (req.method == "PUT") return put_waveform(name, req);
            if (req.method == "DELETE") return delete_waveform(name);
        } else if (p == "/sessions") {
            if (req.method == "POST") return create_session(req);
        } else if (std::regex_match(p, m, session_re)) {
            if (req.method == "GET") return get_session(m[1]);
            if (req.method == "DELETE") return delete_session(m[1]);
        } else if (std::regex_match(p, m, session_sub_re)) {
            const std::string id = m[1], what = m[2];
            if (what == "play" && req.method == "POST") return play(id, req);
            if (what == "stop" && req.method == "POST") return stop(id);
            if (what == "scrub" && (req.method == "GET" || req.method == "POST")) return scrub(id, req);
            if (what == "frames" && req.method == "GET") return frames(id, req);
        } else {
            return error(404, "not_found", "no such resource: " + p);
        }
        return error(405, "method_not_allowed", req.method + " not allowed on " + p);
    }

    // ---- patterns ----

    Response list_patterns() const {
        json out = json::array();
        for (const auto& [id, sp] : patterns_) {
            out.push_back({{"id", id}, {"name", sp.doc.name}, {"version", sp.version}, {"units", sp.doc.unit_count()}});
        }
        return ok(out);
    }

    Response create_pattern(const Request& req) {
        const auto body = parse_body(req);
        PatternDocument doc = pattern_from_json(body);
        doc.validate();
        const std::string id = "p" + std::to_string(++pattern_seq_);
        patterns_[id] = {std::move(doc), 1};
        return ok(pattern_view(id, patterns_[id]), 201);
    }

    Response get_pattern(const std::string& id) {
        auto* sp = find_pattern(id);
        if (!sp) return error(404, "not_found", "unknown pattern " + id);
        return ok(pattern_view(id, *sp));
    }

    Response update_pattern(const std::string& id, const Request& req) {
        auto* sp = find_pattern(id);
        if (!sp) return error(404, "not_found", "unknown pattern " + id);
        const auto body = parse_body(req);
        const int version = required_version(body);
        if (!body.contains("document")) throw ParseError("document: missing field");
        PatternDocument doc = pattern_from_json(body["document"]);
        doc.validate();
        if (version != sp->version) {
            return error(409, "version_conflict",
                         "stale version " + std::to_string(version) + ", current is " + std::to_string(sp->version));
        }
        sp->doc = std::move(doc);
        ++sp->version;
        return ok(pattern_view(id, *sp));
    }

    Response delete_pattern(const std::string& id, const Request& req) {
        auto* sp = find_pattern(id);
        if (!sp) return error(404, "not_found", "unknown pattern " + id);
        if (req.query.contains("version") && req.query.at("version") != std::to_string(sp->version)) {
            return error(409, "version_conflict", "stale version");
        }
        patterns_.erase(id);
        return ok({{"deleted", id}});
    }

    Response add_chain(const std::string& id, const Request& req) {
        auto* sp = find_pattern(id);
        if (!sp) return error(404, "not_found", "unknown pattern " + id);
        const auto body = parse_body(req);
        const int version = required_version(body);
        if (!body.contains("units") || !body["units"].is_number_integer()) throw ValidationError("units: required integer");
        CanvasPoint origin;
        if (body.contains("origin")) {
            origin.x = body["origin"].value("x", 0.0);
            origin.y = body["origin"].value("y", 0.0);
        }
        const double spacing = body.value("spacing", 1.0);
        auto doc = create_chain_grid(sp->doc, body["units"].get<int>(), origin, spacing);
        if (version != sp->version) return error(409, "version_conflict", "stale version");
        sp->doc = std::move(doc);
        ++sp->version;
        return ok(pattern_view(id, *sp));
    }

    Response compile_pattern(const std::string& id) {
        auto* sp = find_pattern(id);
        if (!sp) return error(404, "not_found", "unknown pattern " + id);
        const auto stream = compile(sp->doc);
        return ok({{"id", id}, {"version", sp->version}, {"count", stream.size()}, {"commands", to_text(stream)}});
    }

    // ---- waveform library ----

    Response list_waveforms() const {
        json out = json::array();
        for (const auto& [name, w] : waveforms_) {
            const auto d = duration_ms(w);
            out.push_back({{"name", name}, {"duration_ms", d ? json(*d) : json(nullptr)}});
        }
        return ok(out);
    }

    Response get_waveform(const std::string& name) const {
        const auto it = waveforms_.find(name);
        if (it == waveforms_.end()) return error(404, "not_found", "unknown waveform " + name);
        return ok({{"name", name}, {"waveform", to_json(it->second)}});
    }

    Response put_waveform(const std::string& name, const Request& req) {
        const auto body = parse_body(req);
        const auto w = waveform_from_json(body.contains("waveform") ? body["waveform"] : body);
        validate(w);
        const bool existed = waveforms_.contains(name);
        waveforms_[name] = w;
        return ok({{"name", name}, {"waveform", to_json(w)}}, existed ? 200 : 201);
    }

    /// Body: {"name": ..., "keyframes": <keyframe-JSON document>}.
    Response import_waveform(const Request& req) {
        const auto body = parse_body(req);
        if (!body.is_object() || !body.contains("name") || !body["name"].is_string()) throw ParseError("name: required string");
        if (!body.contains("keyframes")) throw ParseError("keyframes: missing field");
        const auto name = body["name"].get<std::string>();
        if (!std::regex_match(name, std::regex(R"([A-Za-z0-9_.-]+)"))) throw ValidationError("name: invalid characters");
        const auto w = import_keyframes(body["keyframes"]);
        waveforms_[name] = w;
        return ok({{"name", name}, {"waveform", to_json(w)}}, 201);
    }

    Response delete_waveform(const std::string& name) {
        if (!waveforms_.erase(name)) return error(404, "not_found", "unknown waveform " + name);
        return ok({{"deleted", name}});
    }

    Response waveform_samples(const std::string& name, const Request& req) const {
        const auto it = waveforms_.find(name);
        if (it == waveforms_.end()) return error(404, "not_found", "unknown waveform " + name);
        const double rate = query_number(req, "rate", 2000);
        const auto d = duration_ms(it->second);
        const double len = query_number(req, "duration_ms", d.value_or(1000));
        if (!(len > 0 && len <= 60'000)) throw ValidationError("duration_ms: must be in (0, 60000]");
        const auto s = sample(it->second, rate, len);
        return ok({{"name", name}, {"rate_hz", rate}, {"samples", s.samples}});
    }

    static double query_number(const Request& req, const std::string& key, double fallback) {
        const auto it = req.query.find(key);
        if (it == req.query.end()) return fallback;
        double v = 0;
        const auto& s = it->second;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw ValidationError(key + ": expected a number");
        return v;
    }

    // ---- sessions ----

    Session* find_session(const std::string& id) {
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : &it->second;
    }

    json session_view(const std::string& id, Session& s) {
        sync(s);
        return {{"id", id},
                {"pattern_id", s.pattern_id},
                {"status", s.playing && !s.stopping ? "PLAYING" : "STOPPED"},
                {"cursor_ms", s.cursor_ms},
                {"frames", s.frames.size()},
                {"complete", s.complete}};
    }

    Response create_session(const Request& req) {
        const auto body = parse_body(req);
        if (!body.is_object() || !body.contains("pattern_id") || !body["pattern_id"].is_string()) {
            throw ParseError("pattern_id: required string");
        }
        const auto pid = body["pattern_id"].get<std::string>();
        if (!find_pattern(pid)) return error(404, "not_found", "unknown pattern " + pid);
        const std::string id = "s" + std::to_string(++session_seq_);
        sessions_[id].pattern_id = pid;
        return ok(session_view(id, sessions_[id]), 201);
    }

    Response get_session(const std::string& id) {
        auto* s = find_session(id);
        if (!s) return error(404, "not_found", "unknown session " + id);
        return ok(session_view(id, *s));
    }

    Response delete_session(const std::string& id) {
        if (!sessions_.erase(id)) return error(404, "not_found", "unknown session " + id);
        return ok({{"deleted", id}});
    }

    Response play(const std::string& id, const Request& req) {
        auto* s = find_session(id);
        if (!s) return error(404, "not_found", "unknown session " + id);
        sync(*s);
        if (s->playing && !s->stopping) return error(409, "already_playing", "session " + id + " is already playing");
        auto* sp = find_pattern(s->pattern_id);
        if (!sp) return error(404, "not_found", "pattern " + s->pattern_id + " no longer exists");
        double from = 0;
        if (!req.body.empty()) {
            const auto body = parse_body(req);
            if (body.contains("from_ms")) {
                if (!body["from_ms"].is_number()) throw ParseError("from_ms: expected a number");
                from = body["from_ms"].get<double>();
            }
        }
        const auto& doc = sp->doc;
        if (!(from >= 0 && from <= doc.duration_ms())) throw ValidationError("from_ms: outside [0, pattern duration]");
        const auto plan = schedule(playback_commands(doc, from));

        Session fresh;
        fresh.pattern_id = s->pattern_id;
        fresh.playing = true;
        fresh.from_ms = from;
        fresh.duration_ms = doc.duration_ms();
        fresh.start_us = clock_->now_us();
        if (!doc.chains.empty()) fresh.sim = std::make_unique<ChainSimulator>(doc.topology(), latency_);
        for (const auto& p : plan.packets) fresh.packets.push_back(encode_packet(p));
        fresh.end_us = fresh.packets.empty() ? 0 : fresh.packets.back().tick * kTickUs + settle_us(fresh.sim->topology());
        fresh.cursor_ms = from;
        *s = std::move(fresh);
        sync(*s);
        return ok(session_view(id, *s));
    }

    Response stop(const std::string& id) {
        auto* s = find_session(id);
        if (!s) return error(404, "not_found", "unknown session " + id);
        sync(*s);
        if (s->stopping) {
            // already converging
        } else if (s->playing && !s->sim) {
            s->end_us = 0;
            sync(*s);
        } else if (s->playing) {
            const std::int64_t e = elapsed(*s);
            s->stopping = true;
            s->stop_us = e;
            s->packets.resize(s->next_packet);  // nothing further is sent
            s->sim->inject_stop_all(std::max(e, s->sim->clock_us()));
            s->end_us = std::max(e, s->sim->clock_us()) + settle_us(s->sim->topology());
            sync(*s);
        }
        return ok(session_view(id, *s));
    }

    Response scrub(const std::string& id, const Request& req) {
        auto* s = find_session(id);
        if (!s) return error(404, "not_found", "unknown session " + id);
        auto* sp = find_pattern(s->pattern_id);
        if (!sp) return error(404, "not_found", "pattern " + s->pattern_id + " no longer exists");
        double t = 0;
        if (req.query.contains("t_ms")) {
            t = query_number(req, "t_ms", 0);
        } else {
            const auto body = parse_body(req);
            if (!body.contains("t_ms") || !body["t_ms"].is_number()) throw ValidationError("t_ms: required number");
            t = body["t_ms"].get<double>();
        }
        if (!(t >= 0 && t <= sp->doc.duration_ms())) throw ValidationError("t_ms: outside [0, pattern duration]");
        json units = json::array();
        for (const auto& u : active_units_at(sp->doc, t)) units.push_back({{"chain", u.chain}, {"addr", u.address}});
        return ok({{"t_ms", t}, {"units", units}});
    }

    /// NDJSON of frames [since, now); a completion line follows the last frame.
    Response frames(const std::string& id, const Request& req) {
        auto* s = find_session(id);
        if (!s) return error(404, "not_found", "unknown session " + id);
        sync(*s);
        const auto since = static_cast<std::size_t>(std::max(0.0, query_number(req, "since", 0)));
        std::string out;
        for (std::size_t k = since; k < s->frames.size(); ++k) out += s->frames[k].dump() + "\n";
        if (s->complete && since <= s->frames.size()) {
            out += json{{"event", "complete"}, {"frames", s->frames.size()}}.dump() + "\n";
        }
        return {200, out, "application/x-ndjson"};
    }

    // ---- playback clock ----

    std::int64_t settle_us(const Topology& t) const {
        return latency_.ble_one_way_us() + static_cast<std::int64_t>(latency_.ble_jitter_us + 0.5) +
               latency_.processing_us() + t.longest_chain() * latency_.hop_duration_us();
    }

    std::int64_t elapsed(const Session& s) const { return std::max<std::int64_t>(0, clock_->now_us() - s.start_us); }

    void advance_sim(Session& s, std::int64_t t) {
        if (!s.sim) return;
        while (s.next_packet < s.packets.size() && s.packets[s.next_packet].tick * kTickUs <= t) {
            s.sim->inject_mixed(s.packets[s.next_packet].commands, s.packets[s.next_packet].tick * kTickUs);
            ++s.next_packet;
        }
        if (t > s.sim->clock_us()) s.sim->run_until(t);
    }

    // Bring a playing session up to the clock: emit due frames, finish when
    // the last frame at or past end_us has been produced.
    void sync(Session& s) {
        if (!s.playing) return;
        const std::int64_t now = elapsed(s);
        while (true) {
            const std::int64_t tk = ui_frame_time_us(s.next_frame);
            if (tk > now) break;
            advance_sim(s, tk);
            const double t_ms = s.from_ms + static_cast<double>(tk) / 1000.0;
            s.frames.push_back(s.sim ? state_frame(*s.sim, t_ms) : json{{"t_ms", t_ms}, {"units", json::array()}});
            ++s.next_frame;
            if (tk >= s.end_us) {
                s.playing = false;
                s.complete = true;
                if (s.sim) s.sim->run_all();
                break;
            }
        }
        if (s.playing) advance_sim(s, now);
        std::int64_t at = s.playing ? now : std::min(now, s.end_us);
        if (s.stopping) at = std::min(at, s.stop_us);
        s.cursor_ms = std::min(s.duration_ms, s.from_ms + static_cast<double>(at) / 1000.0);
    }

    std::mutex mu_;
    std::shared_ptr<Clock> clock_;
    LatencyModel latency_;
    std::map<std::string, StoredPattern> patterns_;
    std::map<std::string, Waveform> waveforms_;
    std::map<std::string, Session> sessions_;
    int pattern_seq_ = 0;
    int session_seq_ = 0;
};

}  // namespace vibraforge
