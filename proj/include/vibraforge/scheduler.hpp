#pragma once

// Binning of timed commands into 5 ms transport ticks and the transports
// that carry the resulting packets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "vibraforge/commands.hpp"
#include "vibraforge/errors.hpp"
#include "vibraforge/protocol.hpp"
#include "vibraforge/simulator.hpp"

namespace vibraforge {

inline constexpr double kTickMs = 5.0;
inline constexpr std::int64_t kTickUs = 5'000;

inline std::int64_t tick_of(double t_ms) { return static_cast<std::int64_t>(std::floor(t_ms / kTickMs)); }

struct Packet {
    std::int64_t tick = 0;
    CommandStream commands;
    friend bool operator==(const Packet&, const Packet&) = default;
};

/// A command that left its own tick because the tick was full.
struct SpillDiagnostic {
    std::size_t input_index = 0;
    std::int64_t scheduled_tick = 0;
    std::int64_t delivered_tick = 0;
    TimedCommand command;

    std::string to_line() const {
        return "SPILL tick=" + std::to_string(scheduled_tick) + " delivered=" + std::to_string(delivered_tick) +
               " cmd=\"" + vibraforge::to_line(command) + "\"";
    }
};

struct Schedule {
    std::vector<Packet> packets;
    std::vector<SpillDiagnostic> spills;
    std::int64_t first_tick = 0;
    std::vector<std::size_t> backlog;  // commands left waiting after tick first_tick + i

    std::size_t command_count() const {
        std::size_t n = 0;
        for (const auto& p : packets) n += p.commands.size();
        return n;
    }
    std::size_t max_backlog() const { return backlog.empty() ? 0 : *std::max_element(backlog.begin(), backlog.end()); }
};

namespace detail {

struct UnitKey {
    int chain, address;
    friend auto operator<=>(const UnitKey&, const UnitKey&) = default;
};

inline UnitKey key_of(const TimedCommand& c) { return {c.chain, c.command.address}; }

// Pick at most kMaxCommandsPerPacket of `pending` (input order). STOPs go
// first; a command is only taken together with every earlier pending
// command for the same unit, so a STOP may carry that unit's earlier START.
inline std::vector<bool> select_for_tick(const std::vector<TimedCommand>& pending) {
    const std::size_t cap = kMaxCommandsPerPacket;
    std::vector<bool> take(pending.size(), false);
    std::size_t taken = 0;
    bool stop_left = false;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (pending[i].command.is_start()) continue;
        std::vector<std::size_t> group;
        for (std::size_t j = 0; j < i; ++j) {
            if (!take[j] && key_of(pending[j]) == key_of(pending[i])) group.push_back(j);
        }
        group.push_back(i);
        if (taken + group.size() > cap) {
            // Too big for what is left: move the oldest of the group now so
            // the unit's queue keeps draining in order.
            for (std::size_t g = 0; taken < cap; ++g, ++taken) take[group[g]] = true;
            stop_left = true;
            break;
        }
        for (auto j : group) take[j] = true;
        taken += group.size();
    }
    // A START never takes a slot while a STOP is still waiting.
    if (stop_left) return take;
    std::map<UnitKey, bool> blocked;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (take[i]) continue;
        const auto k = key_of(pending[i]);
        if (taken < cap && !blocked[k]) {
            take[i] = true;
            ++taken;
        } else {
            blocked[k] = true;
        }
    }
    return take;
}

}  // namespace detail

/// Bin a time-sorted stream into ticks of at most five commands. Overflow
/// spills to the next tick (STOPs retained first, input order otherwise,
/// per-unit order preserved) and is reported, never dropped.
inline Schedule schedule(const CommandStream& stream) {
    Schedule out;
    if (stream.empty()) return out;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        stream[i].validate();
        if (i > 0 && stream[i].t_ms < stream[i - 1].t_ms) {
            throw ValidationError("command stream is not sorted by time (index " + std::to_string(i) + ")");
        }
    }
    out.first_tick = tick_of(stream.front().t_ms);
    std::vector<TimedCommand> pending;
    std::vector<std::size_t> pending_index;
    std::map<std::size_t, std::size_t> spill_of;  // input index -> position in out.spills
    std::size_t next = 0;
    std::int64_t tick = out.first_tick;
    while (next < stream.size() || !pending.empty()) {
        if (pending.empty() && tick < tick_of(stream[next].t_ms)) {
            // Idle gap: skip empty ticks but keep backlog bookkeeping dense.
            const auto target = tick_of(stream[next].t_ms);
            out.backlog.resize(out.backlog.size() + static_cast<std::size_t>(target - tick), 0);
            tick = target;
        }
        while (next < stream.size() && tick_of(stream[next].t_ms) == tick) {
            pending.push_back(stream[next]);
            pending_index.push_back(next);
            ++next;
        }
        const auto take = detail::select_for_tick(pending);
        Packet p{tick, {}};
        std::vector<TimedCommand> rest;
        std::vector<std::size_t> rest_index;
        for (std::size_t i = 0; i < pending.size(); ++i) {
            const auto idx = pending_index[i];
            if (take[i]) {
                p.commands.push_back(pending[i]);
                if (auto it = spill_of.find(idx); it != spill_of.end()) out.spills[it->second].delivered_tick = tick;
            } else {
                rest.push_back(pending[i]);
                rest_index.push_back(idx);
                if (!spill_of.contains(idx)) {
                    spill_of[idx] = out.spills.size();
                    out.spills.push_back({idx, tick_of(pending[i].t_ms), -1, pending[i]});
                }
            }
        }
        if (!p.commands.empty()) out.packets.push_back(std::move(p));
        pending = std::move(rest);
        pending_index = std::move(rest_index);
        out.backlog.push_back(pending.size());
        ++tick;
    }
    return out;
}

// ---- wire form ----

/// Encoded packet as carried by a transport. Frames may be corrupt.
struct WirePacket {
    std::int64_t tick = 0;
    std::vector<ChainFrames> commands;

    friend bool operator==(const WirePacket& a, const WirePacket& b) {
        if (a.tick != b.tick || a.commands.size() != b.commands.size()) return false;
        for (std::size_t i = 0; i < a.commands.size(); ++i) {
            if (a.commands[i].chain != b.commands[i].chain || a.commands[i].frames != b.commands[i].frames) return false;
        }
        return true;
    }
};

inline WirePacket encode_packet(const Packet& p) {
    WirePacket w{p.tick, {}};
    for (const auto& c : p.commands) w.commands.push_back({c.chain, encode(c.command)});
    return w;
}

using Bytes = std::vector<std::uint8_t>;

/// Record layout: u64 LE tick, u8 count, then per command u8 chain,
/// u8 frame count, the data bytes, and one flag byte whose bit i is the
/// parity bit of frame i.
inline void append_record(Bytes& out, const WirePacket& p) {
    if (p.commands.size() > 255) throw ValidationError("too many commands for one record");
    const auto tick = static_cast<std::uint64_t>(p.tick);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(tick >> (8 * i)));
    out.push_back(static_cast<std::uint8_t>(p.commands.size()));
    for (const auto& c : p.commands) {
        if (c.chain < 0 || c.chain > 255) throw ValidationError("chain id does not fit a byte");
        if (c.frames.empty() || c.frames.size() > 8) throw ValidationError("record commands carry 1..8 frames");
        out.push_back(static_cast<std::uint8_t>(c.chain));
        out.push_back(static_cast<std::uint8_t>(c.frames.size()));
        std::uint8_t flags = 0;
        for (std::size_t i = 0; i < c.frames.size(); ++i) {
            out.push_back(c.frames[i].data);
            if (c.frames[i].parity) flags |= static_cast<std::uint8_t>(1u << i);
        }
        out.push_back(flags);
    }
}

inline Bytes to_record(const WirePacket& p) {
    Bytes b;
    append_record(b, p);
    return b;
}

namespace detail {

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, std::size_t base = 0) : data_(data), base_(base) {}
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == data_.size(); }
    std::uint8_t u8(const char* what) {
        if (pos_ >= data_.size()) {
            throw ParseError(std::string("truncated record: missing ") + what, static_cast<long long>(base_ + pos_));
        }
        return data_[pos_++];
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

inline WirePacket read_record(ByteReader& r) {
    WirePacket p;
    std::uint64_t tick = 0;
    for (int i = 0; i < 8; ++i) tick |= static_cast<std::uint64_t>(r.u8("tick")) << (8 * i);
    p.tick = static_cast<std::int64_t>(tick);
    const int count = r.u8("command count");
    for (int c = 0; c < count; ++c) {
        ChainFrames cf;
        cf.chain = r.u8("chain id");
        const int frames = r.u8("frame count");
        for (int f = 0; f < frames; ++f) cf.frames.push_back({r.u8("frame"), false});
        const std::uint8_t flags = r.u8("parity flags");
        for (int f = 0; f < frames; ++f) cf.frames[static_cast<std::size_t>(f)].parity = (flags >> f) & 1u;
        p.commands.push_back(std::move(cf));
    }
    return p;
}

}  // namespace detail

/// Parse a record file. Truncation raises ParseError at the byte offset.
inline std::vector<WirePacket> parse_records(std::span<const std::uint8_t> data) {
    std::vector<WirePacket> out;
    detail::ByteReader r(data);
    while (!r.done()) out.push_back(detail::read_record(r));
    return out;
}

/// STREAM framing: u32 LE body length, then the record body.
inline Bytes to_stream_frame(const WirePacket& p) {
    const Bytes body = to_record(p);
    Bytes out(4 + body.size());
    const auto n = static_cast<std::uint32_t>(body.size());
    for (std::size_t i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(n >> (8 * i));
    std::copy(body.begin(), body.end(), out.begin() + 4);
    return out;
}

inline std::vector<WirePacket> parse_stream(std::span<const std::uint8_t> data) {
    std::vector<WirePacket> out;
    std::size_t pos = 0;
    while (pos < data.size()) {
        if (data.size() - pos < 4) throw ParseError("truncated stream: missing length prefix", static_cast<long long>(pos));
        std::uint32_t n = 0;
        for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        if (data.size() - pos < n) throw ParseError("truncated stream: packet shorter than its length prefix", static_cast<long long>(data.size()));
        detail::ByteReader r(data.subspan(pos, n), pos);
        out.push_back(detail::read_record(r));
        if (!r.done()) throw ParseError("stream packet has trailing bytes", static_cast<long long>(pos + r.pos()));
        pos += n;
    }
    return out;
}

// ---- endpoints ----

enum class EndpointKind { sim_loopback, record_file, stream };

inline const char* to_string(EndpointKind k) {
    switch (k) {
        case EndpointKind::sim_loopback: return "SIM_LOOPBACK";
        case EndpointKind::record_file: return "RECORD_FILE";
        case EndpointKind::stream: return "STREAM";
    }
    return "?";
}

class TransportEndpoint {
public:
    virtual ~TransportEndpoint() = default;
    virtual EndpointKind kind() const = 0;

    void send(const WirePacket& p) {
        if (closed_) throw TransportError(std::string(to_string(kind())) + " endpoint is closed");
        if (p.commands.size() > kMaxCommandsPerPacket) throw PacketOverflowError("packet carries more than 5 commands");
        do_send(p);
    }
    virtual void close() { closed_ = true; }
    bool is_open() const { return !closed_; }

protected:
    virtual void do_send(const WirePacket& p) = 0;

private:
    bool closed_ = false;
};

/// Injects each packet into a simulator, sent at tick * 5 ms.
class SimLoopbackEndpoint : public TransportEndpoint {
public:
    explicit SimLoopbackEndpoint(ChainSimulator& sim) : sim_(sim) {}
    EndpointKind kind() const override { return EndpointKind::sim_loopback; }
    std::size_t inject_calls() const { return calls_; }

protected:
    void do_send(const WirePacket& p) override {
        if (p.commands.empty()) return;
        sim_.inject_mixed(p.commands, p.tick * kTickUs);
        ++calls_;
    }

private:
    ChainSimulator& sim_;
    std::size_t calls_ = 0;
};

/// Appends records to an in-memory buffer (write it out with bytes()).
class RecordFileEndpoint : public TransportEndpoint {
public:
    EndpointKind kind() const override { return EndpointKind::record_file; }
    const Bytes& bytes() const { return bytes_; }

protected:
    void do_send(const WirePacket& p) override { append_record(bytes_, p); }

private:
    Bytes bytes_;
};

/// Length-prefixed packets to a byte sink: a callback, or a file descriptor
/// such as a connected socket.
class StreamEndpoint : public TransportEndpoint {
public:
    using Sink = std::function<void(std::span<const std::uint8_t>)>;
    explicit StreamEndpoint(Sink sink) : sink_(std::move(sink)) {}

    static StreamEndpoint to_fd(int fd) {
        return StreamEndpoint([fd](std::span<const std::uint8_t> b) {
            std::size_t done = 0;
            while (done < b.size()) {
                const auto n = ::write(fd, b.data() + done, b.size() - done);
                if (n <= 0) throw TransportError("stream write failed: " + std::string(std::strerror(errno)));
                done += static_cast<std::size_t>(n);
            }
        });
    }
    EndpointKind kind() const override { return EndpointKind::stream; }

protected:
    void do_send(const WirePacket& p) override {
        const auto frame = to_stream_frame(p);
        sink_(frame);
    }

private:
    Sink sink_;
};

struct DeliveryReport {
    std::size_t packets = 0;
    std::size_t commands = 0;
    std::int64_t first_tick = 0;
    std::int64_t last_tick = 0;

    /// Packets per second from send times, (N - 1) / (t_last - t_first).
    double rate_packets_per_s() const {
        if (packets < 2 || last_tick == first_tick) return 0;
        return static_cast<double>(packets - 1) / (static_cast<double>(last_tick - first_tick) * kTickMs / 1000.0);
    }
};

inline DeliveryReport dispatch(const std::vector<WirePacket>& packets, TransportEndpoint& endpoint) {
    if (!endpoint.is_open()) throw TransportError(std::string(to_string(endpoint.kind())) + " endpoint is closed");
    DeliveryReport r;
    for (std::size_t i = 0; i < packets.size(); ++i) {
        const auto& p = packets[i];
        if (i > 0 && p.tick <= packets[i - 1].tick) throw ValidationError("packets must have increasing ticks");
        endpoint.send(p);
        if (r.packets == 0) r.first_tick = p.tick;
        r.last_tick = p.tick;
        ++r.packets;
        r.commands += p.commands.size();
    }
    return r;
}

inline DeliveryReport dispatch(const std::vector<Packet>& packets, TransportEndpoint& endpoint) {
    std::vector<WirePacket> wire;
    wire.reserve(packets.size());
    for (const auto& p : packets) wire.push_back(encode_packet(p));
    return dispatch(wire, endpoint);
}

/// Re-dispatch a record file with its original ticks.
inline DeliveryReport replay(std::span<const std::uint8_t> record_file, TransportEndpoint& endpoint) {
    return dispatch(parse_records(record_file), endpoint);
}

/// Launch-side delivery rate seen by the simulator's control unit.
inline double measured_delivery_rate(const ChainSimulator& sim) {
    const auto& p = sim.packets();
    if (p.size() < 2) return 0;
    std::int64_t lo = p.front().launch_us, hi = p.front().launch_us;
    for (const auto& x : p) {
        if (x.launch_us < 0) throw ValidationError("simulator still has undelivered packets");
        lo = std::min(lo, x.launch_us);
        hi = std::max(hi, x.launch_us);
    }
    if (hi == lo) return 0;
    return static_cast<double>(p.size() - 1) * 1e6 / static_cast<double>(hi - lo);
}

}  // namespace vibraforge
