#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "vibraforge/config.hpp"
#include "vibraforge/http_server.hpp"
#include "vibraforge/service.hpp"

using namespace vibraforge;

namespace {

std::string data(const std::string& rel) { return read_file(std::string(VIBRAFORGE_DATA_DIR) + "/" + rel); }

struct Fixture {
    std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>();
    Service svc{clock};

    Response call(const std::string& method, const std::string& path, const json& body = nullptr,
                  std::map<std::string, std::string> query = {}) {
        return svc.handle({method, path, body.is_null() ? "" : body.dump(), std::move(query)});
    }

    std::string create(const json& doc) {
        const auto r = call("POST", "/patterns", doc);
        EXPECT_EQ(r.status, 201) << r.body;
        return r.json_body()["id"];
    }

    std::string session(const std::string& pid) {
        const auto r = call("POST", "/sessions", {{"pattern_id", pid}});
        EXPECT_EQ(r.status, 201) << r.body;
        return r.json_body()["id"];
    }

    std::vector<json> frames(const std::string& sid, std::size_t since = 0) {
        const auto r = call("GET", "/sessions/" + sid + "/frames", nullptr, {{"since", std::to_string(since)}});
        EXPECT_EQ(r.status, 200);
        EXPECT_EQ(r.content_type, "application/x-ndjson");
        std::vector<json> out;
        std::istringstream in(r.body);
        std::string line;
        while (std::getline(in, line)) out.push_back(json::parse(line));
        return out;
    }
};

json phonemic() { return json::parse(data("patterns/consonant_v.json")); }

std::set<UnitAddress> active_in(const json& frame) {
    std::set<UnitAddress> s;
    for (const auto& u : frame["units"]) {
        if (u["active"].get<bool>()) s.insert({u["chain"].get<int>(), u["addr"].get<int>()});
    }
    return s;
}

PatternDocument random_doc(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> chains(1, 3), len(1, 6), count(0, 5), ms(0, 300), dur(10, 200);
    PatternDocument doc;
    const int nc = chains(rng);
    for (int c = 0; c < nc; ++c) doc = create_chain_grid(doc, len(rng), {0, static_cast<double>(c)});
    doc.waveform_library["a"] = Waveform::multiply({Waveform::oscillator(OscShape::sine, 200), Waveform::cos2(120)});
    doc.waveform_library["b"] = Waveform::oscillator(OscShape::sine, 300);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
        const int c = std::uniform_int_distribution<int>(0, nc - 1)(rng);
        const int a = std::uniform_int_distribution<int>(0, static_cast<int>(doc.chains[c].units.size()) - 1)(rng);
        const double t0 = ms(rng);
        Assignment as{{c, a}, i % 2 ? "a" : "b", t0, t0 + dur(rng)};
        doc.assignments.push_back(as);
        try {
            doc.validate();
        } catch (const OverlapError&) {
            doc.assignments.pop_back();
        }
    }
    return doc;
}

}  // namespace

// ---- patterns ----

TEST(Patterns, CreateGridReadListDelete) {
    Fixture f;
    json empty{{"name", "grid"}};
    const auto id = f.create(empty);
    int version = 1;
    for (int c = 0; c < 4; ++c) {
        const auto r = f.call("POST", "/patterns/" + id + "/chains", {{"version", version}, {"units", 6}, {"origin", {{"x", 0}, {"y", c}}}});
        ASSERT_EQ(r.status, 200) << r.body;
        version = r.json_body()["version"];
    }
    const auto got = f.call("GET", "/patterns/" + id);
    ASSERT_EQ(got.status, 200);
    EXPECT_EQ(got.json_body()["units"], 24);
    EXPECT_EQ(got.json_body()["version"], 5);
    EXPECT_EQ(got.json_body()["document"]["chains"].size(), 4u);
    EXPECT_EQ(f.call("GET", "/patterns").json_body().size(), 1u);
    EXPECT_EQ(f.call("DELETE", "/patterns/" + id).status, 200);
    EXPECT_EQ(f.call("GET", "/patterns/" + id).status, 404);
}

TEST(Patterns, SeventeenUnitChainRejected) {
    Fixture f;
    const auto id = f.create(phonemic());
    auto doc = phonemic();
    for (int i = 6; i < 17; ++i) doc["chains"][0]["units"].push_back({{"address", i}, {"x", i}, {"y", 0}});
    const auto r = f.call("PUT", "/patterns/" + id, {{"version", 1}, {"document", doc}});
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(r.json_body()["error"], "validation_error");
    EXPECT_NE(r.json_body()["message"].get<std::string>().find("chains[0]"), std::string::npos);
    // nothing committed
    EXPECT_EQ(f.call("GET", "/patterns/" + id).json_body()["version"], 1);
    EXPECT_EQ(f.call("GET", "/patterns/" + id).json_body()["units"], 24);
    const auto grow = f.call("POST", "/patterns/" + id + "/chains", {{"version", 1}, {"units", 17}});
    EXPECT_EQ(grow.status, 422);
}

TEST(Patterns, StaleVersionConflicts) {
    Fixture f;
    const auto id = f.create(phonemic());
    auto doc = phonemic();
    doc["name"] = "edited";
    EXPECT_EQ(f.call("PUT", "/patterns/" + id, {{"version", 1}, {"document", doc}}).status, 200);
    doc["name"] = "lost update";
    const auto r = f.call("PUT", "/patterns/" + id, {{"version", 1}, {"document", doc}});
    EXPECT_EQ(r.status, 409);
    EXPECT_EQ(r.json_body()["error"], "version_conflict");
    EXPECT_EQ(f.call("GET", "/patterns/" + id).json_body()["document"]["name"], "edited");
    EXPECT_EQ(f.call("PUT", "/patterns/" + id, {{"document", doc}}).status, 422);
    EXPECT_EQ(f.call("DELETE", "/patterns/" + id, nullptr, {{"version", "1"}}).status, 409);
}

TEST(Patterns, ErrorsAreClassified) {
    Fixture f;
    EXPECT_EQ(f.call("GET", "/patterns/nope").status, 404);
    EXPECT_EQ(f.call("GET", "/nowhere").status, 404);
    EXPECT_EQ(f.call("PATCH", "/patterns").status, 405);
    EXPECT_EQ(f.svc.handle({"POST", "/patterns", "{not json", {}}).status, 400);
    auto overlap = phonemic();
    overlap["assignments"].push_back({{"chain", 0}, {"address", 5}, {"waveform", "consonant_v"}, {"t_start_ms", 100}, {"t_end_ms", 500}});
    EXPECT_EQ(f.call("POST", "/patterns", overlap).status, 422);
    EXPECT_TRUE(f.call("GET", "/patterns").json_body().empty());
}

TEST(Patterns, CompileMatchesLibrary) {
    Fixture f;
    const auto id = f.create(phonemic());
    const auto r = f.call("POST", "/patterns/" + id + "/compile");
    ASSERT_EQ(r.status, 200);
    const auto want = compile(parse_pattern(data("patterns/consonant_v.json")));
    EXPECT_EQ(r.json_body()["commands"], to_text(want));
    EXPECT_EQ(r.json_body()["count"], want.size());
}

// ---- waveform library ----

TEST(Waveforms, PutGetSamplesDelete) {
    Fixture f;
    const auto w = json::parse(data("waveforms/consonant_v.json"));
    EXPECT_EQ(f.call("PUT", "/waveforms/consonant_v", w).status, 201);
    EXPECT_EQ(f.call("PUT", "/waveforms/consonant_v", w).status, 200);
    const auto got = f.call("GET", "/waveforms/consonant_v");
    EXPECT_EQ(waveform_from_json(got.json_body()["waveform"]), waveform_from_json(w));
    const auto s = f.call("GET", "/waveforms/consonant_v/samples", nullptr, {{"rate", "2000"}, {"duration_ms", "100"}});
    ASSERT_EQ(s.status, 200) << s.body;
    EXPECT_EQ(s.json_body()["samples"].size(), 200u);
    EXPECT_EQ(f.call("GET", "/waveforms/consonant_v/samples", nullptr, {{"rate", "100"}}).status, 422);
    EXPECT_EQ(f.call("GET", "/waveforms").json_body().size(), 1u);
    EXPECT_EQ(f.call("DELETE", "/waveforms/consonant_v").status, 200);
    EXPECT_EQ(f.call("GET", "/waveforms/consonant_v").status, 404);
}

TEST(Waveforms, ImportKeyframesAndRejectBad) {
    Fixture f;
    const auto kf = json::parse(data("waveforms/swell.keyframes.json"));
    const auto r = f.call("POST", "/waveforms", {{"name", "swell"}, {"keyframes", kf}});
    ASSERT_EQ(r.status, 201) << r.body;
    EXPECT_EQ(waveform_from_json(r.json_body()["waveform"]), import_keyframes(kf));
    EXPECT_EQ(f.call("POST", "/waveforms", {{"name", "x"}, {"keyframes", {{"frequency", json::array()}}}}).status, 400);
    const auto bad_amp = f.call("PUT", "/waveforms/loud", {{"type", "oscillator"}, {"freq_hz", 100}, {"amplitude", 2}});
    EXPECT_EQ(bad_amp.status, 422);
}

TEST(Waveforms, ShippedWaveformsValidate) {
    for (const char* n : {"consonant_v", "consonant_h", "ramp_200hz", "chirp_sweep", "double_pulse"}) {
        SCOPED_TRACE(n);
        EXPECT_NO_THROW(validate(waveform_from_json(json::parse(data(std::string("waveforms/") + n + ".json")))));
    }
}

// ---- sessions ----

TEST(Sessions, ConsonantVPlayback) {
    Fixture f;
    const auto sid = f.session(f.create(phonemic()));
    ASSERT_EQ(f.call("POST", "/sessions/" + sid + "/play").status, 200);
    EXPECT_EQ(f.call("POST", "/sessions/" + sid + "/play").status, 409);
    f.clock->advance(1'000'000);
    const auto fr = f.frames(sid);
    ASSERT_GE(fr.size(), 2u);
    EXPECT_EQ(fr.back()["event"], "complete");
    const std::set<UnitAddress> four{{0, 5}, {1, 5}, {2, 5}, {3, 5}};
    double first_on = -1, last_on = -1;
    for (std::size_t k = 0; k + 1 < fr.size(); ++k) {
        const double t = fr[k]["t_ms"];
        EXPECT_NEAR(t, k * 100.0 / 3.0, 1e-3);
        const auto on = active_in(fr[k]);
        ASSERT_TRUE(on.empty() || on == four) << t;
        if (!on.empty()) {
            if (first_on < 0) first_on = t;
            last_on = t;
        }
        if (t >= 16 && t < 400) {
            EXPECT_EQ(on, four) << t;
        }
        if (t >= 416 || t < 14) {
            EXPECT_TRUE(on.empty()) << t;
        }
    }
    EXPECT_LE(first_on, 16 + 100.0 / 3);
    EXPECT_GE(last_on, 400);
    EXPECT_TRUE(active_in(fr[fr.size() - 2]).empty());
    const auto st = f.call("GET", "/sessions/" + sid).json_body();
    EXPECT_EQ(st["status"], "STOPPED");
    EXPECT_EQ(st["cursor_ms"], 400.0);
}

TEST(Sessions, EmptyPatternCompletesImmediately) {
    Fixture f;
    for (const json& doc : {json{{"name", "nothing"}}, json::parse(R"({"chains":[{"units":[{}, {}]}]})")}) {
        const auto sid = f.session(f.create(doc));
        ASSERT_EQ(f.call("POST", "/sessions/" + sid + "/play").status, 200);
        const auto fr = f.frames(sid);
        ASSERT_EQ(fr.size(), 2u);
        EXPECT_EQ(fr[0]["t_ms"], 0.0);
        EXPECT_EQ(fr[1]["event"], "complete");
        EXPECT_EQ(f.call("GET", "/sessions/" + sid).json_body()["status"], "STOPPED");
    }
}

TEST(Sessions, StopMidPlayConverges) {
    Fixture f;
    const auto sid = f.session(f.create(phonemic()));
    f.call("POST", "/sessions/" + sid + "/play");
    f.clock->advance(200'000);
    EXPECT_EQ(active_in(f.frames(sid).back()).size(), 4u);
    ASSERT_EQ(f.call("POST", "/sessions/" + sid + "/stop").status, 200);
    f.clock->advance(1'000'000);
    const auto fr = f.frames(sid);
    ASSERT_EQ(fr.back()["event"], "complete");
    EXPECT_TRUE(active_in(fr[fr.size() - 2]).empty());
    // converged within one transport latency plus one tick
    for (const auto& frame : fr) {
        if (!frame.contains("t_ms")) continue;
        if (frame["t_ms"].get<double>() >= 200.0 + 16.0 + 5.0) {
            EXPECT_TRUE(active_in(frame).empty()) << frame["t_ms"];
        }
    }
    // a stopped session can play again
    EXPECT_EQ(f.call("POST", "/sessions/" + sid + "/play").status, 200);
}

TEST(Sessions, StopConvergenceProperty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        Fixture f;
        const auto doc = random_doc(rng);
        const auto sid = f.session(f.create(to_json(doc)));
        f.call("POST", "/sessions/" + sid + "/play");
        const std::int64_t at = std::uniform_int_distribution<std::int64_t>(0, 500'000)(rng);
        f.clock->advance(at);
        f.call("POST", "/sessions/" + sid + "/stop");
        f.clock->advance(2'000'000);
        for (const auto& frame : f.frames(sid)) {
            if (!frame.contains("t_ms")) continue;
            if (frame["t_ms"].get<double>() * 1000.0 >= static_cast<double>(at) + 21'000.0) {
                EXPECT_TRUE(active_in(frame).empty()) << "trial " << trial << " t=" << frame["t_ms"];
            }
        }
    }
}

TEST(Sessions, FramesEqualOfflineTraceProperty) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto doc = random_doc(rng);
        Fixture f;
        const auto sid = f.session(f.create(to_json(doc)));
        f.call("POST", "/sessions/" + sid + "/play");
        // advance in uneven steps; frames must not depend on polling pattern
        std::vector<json> fr;
        while (fr.empty() || !fr.back().contains("event")) {
            f.clock->advance(std::uniform_int_distribution<std::int64_t>(1, 90'000)(rng));
            const auto more = f.frames(sid, fr.size());
            fr.insert(fr.end(), more.begin(), more.end());
            if (!fr.empty() && fr.back().contains("event")) break;
        }
        ChainSimulator sim(doc.topology(), LatencyModel{});
        SimLoopbackEndpoint ep(sim);
        dispatch(schedule(compile(doc)).packets, ep);
        sim.run_all();
        for (std::size_t k = 0; k + 1 < fr.size(); ++k) {
            const auto t_us = ui_frame_time_us(static_cast<std::int64_t>(k));
            ASSERT_DOUBLE_EQ(fr[k]["t_ms"].get<double>(), static_cast<double>(t_us) / 1000.0);
            for (const auto& u : fr[k]["units"]) {
                const auto want = sim.drive_at(u["chain"], u["addr"], t_us);
                ASSERT_EQ(u["active"].get<bool>(), want.has_value()) << "trial " << trial << " frame " << k;
                if (want) {
                    ASSERT_EQ(u["intensity"], want->intensity);
                    ASSERT_EQ(u["freq_idx"], want->frequency_index);
                }
            }
        }
    }
}

TEST(Sessions, PlayFromMidpointStartsRunningUnits) {
    Fixture f;
    const auto sid = f.session(f.create(phonemic()));
    ASSERT_EQ(f.call("POST", "/sessions/" + sid + "/play", {{"from_ms", 200}}).status, 200);
    f.clock->advance(100'000);
    const auto fr = f.frames(sid);
    EXPECT_EQ(fr[0]["t_ms"], 200.0);
    EXPECT_EQ(active_in(fr.back()).size(), 4u);
    EXPECT_EQ(f.call("POST", "/sessions/" + sid + "/stop").status, 200);
    EXPECT_EQ(f.call("POST", "/sessions/" + sid + "/play", {{"from_ms", 401}}).status, 422);
}

TEST(Sessions, ScrubExamples) {
    Fixture f;
    const auto sid = f.session(f.create(phonemic()));
    auto scrub = [&](const std::string& t) { return f.call("GET", "/sessions/" + sid + "/scrub", nullptr, {{"t_ms", t}}); };
    EXPECT_EQ(scrub("0").json_body()["units"].size(), 4u);
    EXPECT_EQ(scrub("200").json_body()["units"].size(), 4u);
    EXPECT_TRUE(scrub("400").json_body()["units"].empty());
    EXPECT_EQ(scrub("-1").status, 422);
    EXPECT_EQ(scrub("401").status, 422);
    EXPECT_EQ(scrub("abc").status, 422);
    // scrubbing leaves a running playback alone
    f.call("POST", "/sessions/" + sid + "/play");
    f.clock->advance(50'000);
    const auto before = f.frames(sid).size();
    EXPECT_EQ(scrub("300").status, 200);
    EXPECT_EQ(f.frames(sid).size(), before);
    EXPECT_EQ(f.call("GET", "/sessions/" + sid).json_body()["status"], "PLAYING");
}

TEST(Sessions, ScrubEqualsActiveUnitsProperty) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto doc = random_doc(rng);
        Fixture f;
        const auto sid = f.session(f.create(to_json(doc)));
        for (int k = 0; k < 10; ++k) {
            const double t = std::uniform_real_distribution<double>(0, doc.duration_ms())(rng);
            const auto r = f.call("POST", "/sessions/" + sid + "/scrub", {{"t_ms", t}});
            ASSERT_EQ(r.status, 200);
            std::set<UnitAddress> got;
            const auto body = r.json_body();
            for (const auto& u : body["units"]) got.insert(UnitAddress{u["chain"].get<int>(), u["addr"].get<int>()});
            EXPECT_EQ(got, active_units_at(doc, t)) << r.body;
        }
    }
}

TEST(Sessions, UnknownIdsAndDeletedPattern) {
    Fixture f;
    EXPECT_EQ(f.call("POST", "/sessions/s9/play").status, 404);
    EXPECT_EQ(f.call("POST", "/sessions", {{"pattern_id", "p9"}}).status, 404);
    const auto pid = f.create(phonemic());
    const auto sid = f.session(pid);
    f.call("DELETE", "/patterns/" + pid);
    EXPECT_EQ(f.call("POST", "/sessions/" + sid + "/play").status, 404);
    EXPECT_EQ(f.call("DELETE", "/sessions/" + sid).status, 200);
    EXPECT_EQ(f.call("GET", "/sessions/" + sid).status, 404);
}

TEST(Sessions, IndependentSessions) {
    Fixture f;
    const auto pid = f.create(phonemic());
    const auto a = f.session(pid), b = f.session(pid);
    f.call("POST", "/sessions/" + a + "/play");
    f.clock->advance(100'000);
    f.call("POST", "/sessions/" + b + "/play");
    EXPECT_EQ(f.call("POST", "/sessions/" + a + "/stop").status, 200);
    EXPECT_EQ(f.call("GET", "/sessions/" + b).json_body()["status"], "PLAYING");
}

// ---- HTTP binding ----

TEST(Http, LiveServerRoundTrip) {
    auto clock = std::make_shared<ManualClock>();
    auto svc = std::make_shared<Service>(clock);
    HttpServer server(svc);
    const int port = server.bind_any("127.0.0.1");
    ASSERT_GT(port, 0);
    server.start();
    httplib::Client cli("127.0.0.1", port);
    auto r = cli.Post("/patterns", data("patterns/consonant_v.json"), "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 201);
    const std::string pid = json::parse(r->body)["id"];
    r = cli.Get("/patterns/" + pid);
    ASSERT_TRUE(r);
    EXPECT_EQ(json::parse(r->body)["units"], 24);
    r = cli.Get("/patterns/zzz");
    EXPECT_EQ(r->status, 404);
    r = cli.Post("/sessions", json{{"pattern_id", pid}}.dump(), "application/json");
    const std::string sid = json::parse(r->body)["id"];
    r = cli.Get("/sessions/" + sid + "/scrub?t_ms=200");
    ASSERT_TRUE(r);
    EXPECT_EQ(json::parse(r->body)["units"].size(), 4u);
    r = cli.Post("/sessions/" + sid + "/play", "", "application/json");
    EXPECT_EQ(r->status, 200);
    clock->advance(1'000'000);
    r = cli.Get("/sessions/" + sid + "/frames?follow=1");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->get_header_value("Content-Type"), "application/x-ndjson");
    std::istringstream in(r->body);
    std::string line, last;
    int n = 0;
    while (std::getline(in, line)) {
        last = line;
        ++n;
    }
    EXPECT_GT(n, 12);
    EXPECT_EQ(json::parse(last)["event"], "complete");
    server.stop();
}
