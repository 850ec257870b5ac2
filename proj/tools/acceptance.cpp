// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: vibraforge_acceptance [data-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>

#include "vibraforge/cli.hpp"
#include "vibraforge/config.hpp"
#include "vibraforge/fidelity.hpp"
#include "vibraforge/ladder.hpp"
#include "vibraforge/pattern.hpp"
#include "vibraforge/protocol.hpp"
#include "vibraforge/reports.hpp"
#include "vibraforge/scheduler.hpp"
#include "vibraforge/segmentation.hpp"
#include "vibraforge/simulator.hpp"

using namespace vibraforge;

namespace {

std::string data_dir = VIBRAFORGE_DATA_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Outcome latency() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto r = latency_report(Topology::uniform(1, 16), LatencyModel{});
    const double dt = seconds_since(t0);
    o.require(r.value("total_ms") == 16.0, "total_ms=" + num(r.value("total_ms")));
    o.require(to_text(r).find("total_ms=16.000000\n") != std::string::npos, "report text lacks total_ms=16.000000");
    o.require(dt < 1.0, "runtime " + num(dt) + " s");
    if (o.pass) o.detail = "total 16.000 ms, " + num(dt) + " s";
    return o;
}

Outcome bandwidth() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto r = bandwidth_report(Topology::uniform(2, 16), LatencyModel{});
    const double dt = seconds_since(t0);
    o.require(r.value("commands_sent") == 5000, "sent " + num(r.value("commands_sent")));
    o.require(r.value("commands_delivered") == 5000, "delivered " + num(r.value("commands_delivered")));
    o.require(r.value("commands_lost") == 0, "lost " + num(r.value("commands_lost")));
    o.require(r.value("delivery_rate_packets_per_s") == 200.0, "rate " + num(r.value("delivery_rate_packets_per_s")));
    o.require(dt < 5.0, "runtime " + num(dt) + " s");
    if (o.pass) o.detail = "5000/5000 delivered at 200 packets/s, " + num(dt) + " s";
    return o;
}

Outcome battery() {
    Outcome o;
    const auto r = battery_report();
    struct Want {
        const char* label;
        double ma, hours;
    };
    for (const Want& w : {Want{"2x16_idle_500mAh", 186, 2.69}, Want{"2x16_2on_500mAh", 486, 1.03},
                          Want{"4x16_idle_8200mAh", 266, 30.83}, Want{"4x16_8on_8200mAh", 1460, 5.62}}) {
        const double ma = r.cell(w.label, "current_ma"), h = r.cell(w.label, "battery_h");
        o.require(std::abs(ma - w.ma) <= 0.01 * w.ma, std::string(w.label) + " current " + num(ma));
        o.require(std::abs(h - w.hours) <= 0.01 * w.hours, std::string(w.label) + " hours " + num(h));
    }
    if (o.pass) o.detail = "4 scenarios within 1%";
    return o;
}

Outcome voltage() {
    Outcome o;
    const auto cal = calibrate_wires();
    Topology t = Topology::uniform(1, 16);
    t.wires = cal.wires;
    const auto r = voltage_sweep(t);
    o.require(r.value("mcu_crossing_active") == 17, "mcu crossing at " + num(r.value("mcu_crossing_active")));
    o.require(r.value("actuator_crossing_active") == 18, "actuator crossing at " + num(r.value("actuator_crossing_active")));
    for (std::size_t k = 1; k < r.rows.size(); ++k) {
        for (std::size_t c = 0; c < 4; ++c) {
            o.require(r.rows[k].values[c] <= r.rows[k - 1].values[c], "curve rises at row " + std::to_string(k));
        }
    }
    for (const auto& row : r.rows) {
        o.require(row.values[2] >= row.values[0] && row.values[3] >= row.values[1], "CLOSED below OPEN at " + row.label);
    }
    const double open8 = sweep_point(cal.wires, LoopMode::open, 8, 8).actuator_v;
    const double closed8 = sweep_point(cal.wires, LoopMode::closed, 8, 8).actuator_v;
    o.require(std::abs(open8 - 3.1) <= 0.2, "8-unit OPEN " + num(open8) + " V");
    o.require(std::abs(closed8 - 4.2) <= 0.2, "8-unit CLOSED " + num(closed8) + " V");
    if (o.pass) o.detail = "crossings 17/18, 8 units " + num(open8) + " V open / " + num(closed8) + " V closed";
    return o;
}

Outcome codec() {
    Outcome o;
    const auto t0 = Clock::now();
    std::size_t n = 0;
    for (int a = 0; a <= kMaxAddress; ++a) {
        std::vector<VibrationCommand> cmds{VibrationCommand::stop(a)};
        for (int i = 0; i < kIntensityLevels; ++i)
            for (int f = 0; f < kFrequencyLevels; ++f)
                for (auto w : {WaveformSel::sine, WaveformSel::square}) cmds.push_back(VibrationCommand::start(a, i, f, w));
        for (const auto& c : cmds) {
            ++n;
            const auto frames = encode(c);
            if (!(decode(frames) == c)) o.require(false, "round trip failed at address " + std::to_string(a));
            for (const auto& b : frames) {
                for (int bit = 0; bit <= 8; ++bit) {
                    if (b.with_bit_flipped(bit).parity_ok()) o.require(false, "undetected flip");
                }
            }
        }
    }
    for (int a = 0; a < 16; ++a) {
        FrameByte b = encode(VibrationCommand::start(a, 5, 5))[0];
        int unit = 0;
        for (auto d = apply_hop(b); !d.consumed(); d = apply_hop(b)) {
            b = d.forwarded;
            ++unit;
        }
        o.require(unit == a, "hop walk for address " + std::to_string(a) + " ends at " + std::to_string(unit));
    }
    const double dt = seconds_since(t0);
    o.require(dt < 1.0, "runtime " + num(dt) + " s");
    if (o.pass) o.detail = std::to_string(n) + " commands, " + num(dt) + " s";
    return o;
}

Outcome segmentation() {
    Outcome o;
    SampledWaveform w;
    w.sample_rate_hz = 44100;
    for (int i = 0; i < 88200; ++i) {
        const double t = i / 44100.0;
        w.samples.push_back(std::sin(2 * std::numbers::pi * 200 * t) * std::sin(2 * std::numbers::pi * 5 * t));
    }
    const auto s = segment(w);
    o.require(s.frames.size() == 400, std::to_string(s.frames.size()) + " frames");
    std::vector<double> level, want;
    int wrong = 0;
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
        if (s.frames[i].active && s.frames[i].frequency_index != 3) ++wrong;
        level.push_back(s.frames[i].active ? s.frames[i].intensity : 0.0);
        want.push_back(std::abs(std::sin(2 * std::numbers::pi * 5 * static_cast<double>(i) / 200)));
    }
    o.require(wrong == 0, std::to_string(wrong) + " active frames off index 3");
    const double r = pearson(level, want);
    o.require(r >= 0.95, "pearson " + num(r));
    if (o.pass) o.detail = "400 frames, index 3, pearson " + num(r);
    return o;
}

Outcome approximation() {
    Outcome o;
    std::string got;
    for (const char* name : {"consonant_h", "ramp_200hz", "chirp_sweep", "double_pulse"}) {
        const auto w = waveform_from_json(json::parse(read_file(data_dir + "/waveforms/" + name + ".json")));
        const double r = approximation_fidelity(w).correlation;
        o.require(r >= 0.9, std::string(name) + " pearson " + num(r));
        got += std::string(got.empty() ? "" : ", ") + name + " " + num(r);
    }
    if (o.pass) o.detail = got;
    return o;
}

Outcome phonemic() {
    Outcome o;
    const auto doc = parse_pattern(read_file(data_dir + "/patterns/consonant_v.json"));
    const auto sys = parse_config(read_file(data_dir + "/topologies/phonemic_4x6.json"));
    const auto stream = compile(doc);
    ChainSimulator sim(sys.topology, sys.latency);
    SimLoopbackEndpoint ep(sim);
    dispatch(schedule(stream).packets, ep);
    sim.run_all();
    const std::vector<UnitAddress> four{{0, 5}, {1, 5}, {2, 5}, {3, 5}};
    std::int64_t on = -1, off = -1;
    for (std::int64_t t = 0; t <= 500'000; t += 250) {
        const auto active = sim.vibrating_units_at(t);
        if (t >= 16'000 && t < 400'000 && active != four) o.require(false, "wrong active set at " + num(t / 1000.0) + " ms");
        if (t >= 416'000 && !active.empty()) o.require(false, "units still active at " + num(t / 1000.0) + " ms");
        for (const auto& u : active) {
            if (std::find(four.begin(), four.end(), u) == four.end()) o.require(false, "stray unit active");
        }
        if (!active.empty() && on < 0) on = t;
        if (!active.empty()) off = t;
    }
    const auto counts = sim.outcome_counts();
    o.require(counts.consumed == counts.injected && counts.dropped == 0, "not every command was consumed");
    int stops = 0;
    for (const auto& e : sim.log()) stops += e.type == SimEventType::stop;
    o.require(stops == 4, std::to_string(stops) + " STOPs delivered");
    o.require(sim.vibrating_units_at(std::numeric_limits<std::int64_t>::max()).empty(), "final state not all-inactive");
    if (o.pass) o.detail = "4 units on from " + num(on / 1000.0) + " ms to " + num(off / 1000.0) + " ms, 4 STOPs";
    return o;
}

Outcome frequency_table() {
    Outcome o;
    const auto& f = LevelTables::frequencies_hz;
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
        const double r = f[i + 1] / f[i];
        o.require(r >= 1.17 && r <= 1.19, num(f[i + 1]) + "/" + num(f[i]) + " = " + num(r) + " outside [1.17, 1.19]");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        o.require(quantize_frequency(f[i]) == static_cast<int>(i), "quantize_frequency not identity at " + num(f[i]));
    }
    if (o.pass) o.detail = "ratios in band, identity holds";
    return o;
}

Outcome determinism() {
    Outcome o;
    const std::string pattern = data_dir + "/patterns/consonant_v.json";
    std::ostringstream compiled, e;
    const char* compile_argv[] = {"vibraforge", "compile", pattern.c_str()};
    if (run_cli(3, compile_argv, compiled, e, "7") != 0) {
        o.require(false, "compile failed: " + e.str());
        return o;
    }
    const auto tmp = std::filesystem::temp_directory_path() / "vibraforge_acceptance_cmds.txt";
    write_file(tmp.string(), compiled.str());
    const std::string cmds = tmp.string(), topo = data_dir + "/topologies/phonemic_4x6.json";
    const std::vector<std::vector<std::string>> runs = {
        {"compile", pattern},
        {"simulate", cmds, "--topology", topo},
        {"simulate", cmds, "--topology", topo, "--fault", "drop:1:3", "--fault", "bitflip:2:0:1:4"},
        {"report", "latency"},
        {"report", "voltage"},
        {"report", "battery"},
        {"report", "bandwidth"},
    };
    for (const auto& args : runs) {
        std::string a_out, b_out;
        for (std::string* dst : {&a_out, &b_out}) {
            std::vector<const char*> argv{"vibraforge"};
            for (const auto& s : args) argv.push_back(s.c_str());
            std::ostringstream out, err;
            const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err, "7");
            o.require(rc == 0, args[0] + " exited " + std::to_string(rc));
            *dst = out.str();
        }
        o.require(!a_out.empty() && a_out == b_out, args[0] + " " + args[1] + " differs between runs");
    }
    std::filesystem::remove(tmp);
    if (o.pass) o.detail = std::to_string(runs.size()) + " pipelines byte-identical";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) data_dir = argv[1];
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"latency", latency},         {"bandwidth", bandwidth},         {"battery", battery},
        {"voltage", voltage},         {"codec", codec},                 {"segmentation", segmentation},
        {"approximation", approximation}, {"phonemic", phonemic},       {"frequency_table", frequency_table},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << i + 1 << ' ' << criteria[i].first << ": " << (o.pass ? "PASS" : "FAIL") << " ("
                  << o.detail << ")\n";
    }
    std::cout << (criteria.size() - failed) << '/' << criteria.size() << " passed\n";
    return failed == 0 ? 0 : 1;
}
