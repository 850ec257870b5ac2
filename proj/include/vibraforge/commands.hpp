#pragma once

// Timestamped command streams and their line format:
//
//   <t_ms> <chain> <addr> START <intensity> <freq_idx> SINE|SQUARE
//   <t_ms> <chain> <addr> STOP
//
// Blank lines and lines starting with '#' are ignored on input.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vibraforge/errors.hpp"
#include "vibraforge/protocol.hpp"

namespace vibraforge {

struct TimedCommand {
    double t_ms = 0;
    int chain = 0;
    VibrationCommand command;

    void validate() const {
        if (!(t_ms >= 0) || !std::isfinite(t_ms)) throw ValidationError("command time must be >= 0");
        if (chain < 0) throw ValidationError("chain id must be >= 0");
        command.validate();
    }
    friend bool operator==(const TimedCommand&, const TimedCommand&) = default;
};

using CommandStream = std::vector<TimedCommand>;

/// Order used everywhere: time, chain, address, STOP before START.
inline bool command_order(const TimedCommand& a, const TimedCommand& b) {
    if (a.t_ms != b.t_ms) return a.t_ms < b.t_ms;
    if (a.chain != b.chain) return a.chain < b.chain;
    if (a.command.address != b.command.address) return a.command.address < b.command.address;
    return !a.command.is_start() && b.command.is_start();
}

inline void sort_commands(CommandStream& s) { std::stable_sort(s.begin(), s.end(), command_order); }

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string to_line(const TimedCommand& c) {
    std::string out = format_number(c.t_ms) + ' ' + std::to_string(c.chain) + ' ' + std::to_string(c.command.address);
    if (!c.command.is_start()) return out + " STOP";
    return out + " START " + std::to_string(c.command.intensity) + ' ' + std::to_string(c.command.frequency_index) +
           ' ' + to_string(c.command.waveform);
}

inline std::string to_text(const CommandStream& s) {
    std::string out;
    for (const auto& c : s) {
        out += to_line(c);
        out += '\n';
    }
    return out;
}

inline CommandStream parse_commands(std::string_view text) {
    CommandStream out;
    std::istringstream in{std::string(text)};
    std::string line;
    long long line_no = 0;
    auto to_int = [&](const std::string& tok) {
        int v = 0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size()) throw ParseError("bad integer `" + tok + "`", line_no);
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.size() != 4 && tok.size() != 7) throw ParseError("expected 4 or 7 fields", line_no);
        TimedCommand c;
        const auto r = std::from_chars(tok[0].data(), tok[0].data() + tok[0].size(), c.t_ms);
        if (r.ec != std::errc{} || r.ptr != tok[0].data() + tok[0].size()) throw ParseError("bad time `" + tok[0] + "`", line_no);
        c.chain = to_int(tok[1]);
        c.command.address = to_int(tok[2]);
        if (tok[3] == "STOP" && tok.size() == 4) {
            c.command.action = Action::stop;
        } else if (tok[3] == "START" && tok.size() == 7) {
            c.command.action = Action::start;
            c.command.intensity = to_int(tok[4]);
            c.command.frequency_index = to_int(tok[5]);
            if (tok[6] == "SINE") {
                c.command.waveform = WaveformSel::sine;
            } else if (tok[6] == "SQUARE") {
                c.command.waveform = WaveformSel::square;
            } else {
                throw ParseError("waveform must be SINE or SQUARE", line_no);
            }
        } else {
            throw ParseError("expected START with 3 payload fields or bare STOP", line_no);
        }
        try {
            c.validate();
        } catch (const Error& e) {
            throw ParseError(e.what(), line_no);
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace vibraforge
