#pragma once

// Command-line front end. Data goes to `out` (or -o), diagnostics to `err`.
// Exit codes: 0 ok, 1 usage or validation error, 2 parse or I/O error.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vibraforge/commands.hpp"
#include "vibraforge/config.hpp"
#include "vibraforge/errors.hpp"
#include "vibraforge/http_server.hpp"
#include "vibraforge/pattern.hpp"
#include "vibraforge/reports.hpp"
#include "vibraforge/scheduler.hpp"
#include "vibraforge/segmentation.hpp"
#include "vibraforge/service.hpp"
#include "vibraforge/simulator.hpp"

namespace vibraforge {

inline constexpr std::uint64_t kDefaultSeed = 0x5eed;

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_parse = 2 };

struct CliConfig {
    std::string subcommand;
    std::string input;
    std::string output;  // empty: stdout
    std::string topology_path;
    std::string report_kind;
    std::vector<std::string> faults;
    std::uint64_t seed = kDefaultSeed;
    std::optional<double> ble_ms;
    std::optional<double> hop_us;
    std::string host = "127.0.0.1";
    int port = 8080;
};

/// `bitflip:chain:hop:frame:bit` or `drop:chain:hop`.
inline Fault parse_fault(const std::string& spec) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        const auto c = spec.find(':', pos);
        parts.push_back(spec.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
        if (c == std::string::npos) break;
        pos = c + 1;
    }
    std::vector<int> n;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        int v = 0;
        const auto& s = parts[i];
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size() || v < 0) {
            throw ValidationError("--fault `" + spec + "`: expected non-negative integers");
        }
        n.push_back(v);
    }
    if (parts[0] == "bitflip" && n.size() == 4) {
        if (n[2] > 1 || n[3] > 8) throw ValidationError("--fault `" + spec + "`: frame is 0..1, bit is 0..8");
        return Fault::bit_flip(n[0], n[1], n[2], n[3]);
    }
    if (parts[0] == "drop" && n.size() == 2) return Fault::drop(n[0], n[1]);
    throw ValidationError("--fault `" + spec + "`: expected bitflip:c:h:f:b or drop:c:h");
}

inline std::uint64_t seed_from_env(const char* value) {
    if (!value || !*value) return kDefaultSeed;
    std::uint64_t v = 0;
    const std::string_view s(value);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw ValidationError("VIBRAFORGE_SEED: expected an unsigned integer");
    return v;
}

inline SystemConfig load_system(const CliConfig& cfg, const Topology& fallback) {
    SystemConfig sys;
    if (cfg.topology_path.empty()) {
        sys.topology = fallback;
    } else {
        sys = parse_config(read_file(cfg.topology_path));
    }
    if (cfg.ble_ms) sys.latency.ble_one_way_ms = *cfg.ble_ms;
    if (cfg.hop_us) sys.latency.hop_us = *cfg.hop_us;
    sys.latency.validate();
    return sys;
}

/// Event log of a simulated command stream, one `t_us chain unit EVENT detail`
/// line per event, followed by spill diagnostics and an outcome line.
inline std::string simulate_text(const CommandStream& stream, const SystemConfig& sys, const std::vector<Fault>& faults,
                                 std::uint64_t seed) {
    const auto plan = schedule(stream);
    ChainSimulator sim(sys.topology, sys.latency, seed);
    for (const auto& f : faults) sim.inject_fault(f);
    SimLoopbackEndpoint ep(sim);
    dispatch(plan.packets, ep);
    const auto events = sim.run_all();
    std::string out;
    for (const auto& e : events) out += e.to_line() + '\n';
    for (const auto& s : plan.spills) out += "# " + s.to_line() + '\n';
    const auto c = sim.outcome_counts();
    out += "# outcome injected=" + std::to_string(c.injected) + " consumed=" + std::to_string(c.consumed) +
           " dropped=" + std::to_string(c.dropped) + " exited=" + std::to_string(c.exited) + '\n';
    return out;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
                   const char* seed_env = std::getenv("VIBRAFORGE_SEED")) {
    CliConfig cfg;
    CLI::App app{"vibraforge: daisy-chained vibrotactile toolkit", "vibraforge"};
    app.require_subcommand(1, 1);

    auto add_latency = [&](CLI::App* sub) {
        sub->add_option("--ble-ms", cfg.ble_ms, "Override one-way BLE latency (ms)");
        sub->add_option("--hop-us", cfg.hop_us, "Override per-hop latency (us)");
    };

    auto* transcode = app.add_subcommand("transcode", "Segment a sample CSV into a 200 Hz level stream");
    transcode->add_option("input", cfg.input, "Sample CSV (rate=<hz> header)")->required();
    transcode->add_option("-o,--out", cfg.output, "Output file (default stdout)");

    auto* compile_cmd = app.add_subcommand("compile", "Compile a pattern document to timed commands");
    compile_cmd->add_option("input", cfg.input, "Pattern JSON")->required();
    compile_cmd->add_option("-o,--out", cfg.output, "Output file (default stdout)");

    auto* simulate = app.add_subcommand("simulate", "Schedule and simulate a command stream; print the event log");
    simulate->add_option("input", cfg.input, "Command stream text")->required();
    simulate->add_option("--topology", cfg.topology_path, "Topology JSON")->required();
    simulate->add_option("--fault", cfg.faults, "bitflip:chain:hop:frame:bit or drop:chain:hop (repeatable)");
    simulate->add_option("-o,--out", cfg.output, "Output file (default stdout)");
    add_latency(simulate);

    auto* report = app.add_subcommand("report", "Latency, voltage, battery or bandwidth report");
    report->add_option("kind", cfg.report_kind, "latency|voltage|battery|bandwidth")
        ->required()
        ->check(CLI::IsMember({"latency", "voltage", "battery", "bandwidth"}));
    report->add_option("--topology", cfg.topology_path, "Topology JSON (default: one 16-unit chain)");
    report->add_option("-o,--out", cfg.output, "Output file (default stdout)");
    add_latency(report);

    auto* serve = app.add_subcommand("serve", "Run the editor service over HTTP");
    serve->add_option("--port", cfg.port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--host", cfg.host, "Bind address");
    serve->add_option("--topology", cfg.topology_path, "Topology JSON supplying the latency model");
    add_latency(serve);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return exit_validation;
    }

    auto emit = [&](const std::string& text) {
        if (cfg.output.empty()) {
            out << text;
        } else {
            write_file(cfg.output, text);
        }
    };

    try {
        cfg.seed = seed_from_env(seed_env);
        if (transcode->parsed()) {
            emit(segment(parse_sample_csv(read_file(cfg.input))).to_text());
        } else if (compile_cmd->parsed()) {
            emit(to_text(compile(parse_pattern(read_file(cfg.input)))));
        } else if (simulate->parsed()) {
            std::vector<Fault> faults;
            for (const auto& f : cfg.faults) faults.push_back(parse_fault(f));
            const auto sys = load_system(cfg, {});
            emit(simulate_text(parse_commands(read_file(cfg.input)), sys, faults, cfg.seed));
        } else if (report->parsed()) {
            const auto sys = load_system(cfg, Topology::uniform(1, kMaxUnitsPerChain));
            Report r;
            if (cfg.report_kind == "latency") r = latency_report(sys.topology, sys.latency, cfg.seed);
            else if (cfg.report_kind == "voltage") r = voltage_sweep(sys.topology);
            else if (cfg.report_kind == "battery") r = battery_report();
            else r = bandwidth_report(sys.topology, sys.latency, {}, cfg.seed);
            emit(to_text(r));
        } else if (serve->parsed()) {
            const auto sys = load_system(cfg, Topology::uniform(1, kMaxUnitsPerChain));
            HttpServer server(std::make_shared<Service>(std::make_shared<SteadyClock>(), sys.latency));
            const int port = server.bind(cfg.host, cfg.port);
            if (port < 0) throw IoError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
            err << "listening on http://" << cfg.host << ':' << port << std::endl;
            server.run();
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.is_parse_error() ? exit_parse : exit_validation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_validation;
    }
    return exit_ok;
}

}  // namespace vibraforge
