#pragma once

// Deterministic discrete-event model of one control unit and its chains.
//
// A packet written by the host reaches the control unit after the BLE one-way
// latency. The control unit handles packets one at a time (at most one every
// `ble_processing_ms`) and launches each command's frames onto its chain.
// Every unit-to-unit transfer, including control unit -> unit 0, takes
// `hop_us`, so a fault-free command reaches unit h at
//   send + ble_one_way + (h + 1) * hop.
// Units run the protocol hop rule frame by frame. A frame failing parity (or
// hit by a DROP fault) discards the whole command at that unit. A selected
// unit waiting for its payload byte gives up after 10 ms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vibraforge/errors.hpp"
#include "vibraforge/protocol.hpp"
#include "vibraforge/topology.hpp"

namespace vibraforge {

inline constexpr int kMaxCommandsPerPacket = 5;
inline constexpr std::int64_t kAwaitTimeoutUs = 10'000;

enum class UnitPhase { idle, await_second_byte, active };

struct DriveParams {
    int intensity = 0;
    int frequency_index = 0;
    WaveformSel waveform = WaveformSel::sine;
    friend bool operator==(const DriveParams&, const DriveParams&) = default;
};

struct UnitState {
    UnitPhase phase = UnitPhase::idle;
    // Actuator drive. Kept while a new START is awaiting its payload.
    std::optional<DriveParams> current;

    bool vibrating() const { return current.has_value(); }
    double mcu_current_a() const { return Electrical::mcu_current_a; }
    double actuator_current_a() const { return vibrating() ? Electrical::actuator_current_a : 0.0; }
};

/// One change of a unit's actuator output.
struct TraceSample {
    std::int64_t t_us = 0;
    std::optional<DriveParams> drive;
    friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

enum class SimEventType { start, stop, await, timeout, abort, parity_drop, fault_drop, exit };

inline const char* to_string(SimEventType t) {
    switch (t) {
        case SimEventType::start: return "START";
        case SimEventType::stop: return "STOP";
        case SimEventType::await: return "AWAIT";
        case SimEventType::timeout: return "TIMEOUT";
        case SimEventType::abort: return "ABORT";
        case SimEventType::parity_drop: return "PARITY_DROP";
        case SimEventType::fault_drop: return "FAULT_DROP";
        case SimEventType::exit: return "EXIT";
    }
    return "?";
}

struct SimEvent {
    std::int64_t t_us = 0;
    int chain = 0;
    int unit = 0;  // == chain length for EXIT
    SimEventType type = SimEventType::start;
    std::string detail = "-";

    /// `t_us chain unit EVENT detail`
    std::string to_line() const {
        std::ostringstream os;
        os << t_us << ' ' << chain << ' ' << unit << ' ' << to_string(type) << ' ' << detail;
        return os.str();
    }
    friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct Fault {
    enum class Kind { bit_flip, drop };
    Kind kind = Kind::drop;
    int chain = 0;
    int hop = 0;    // receiving unit index
    int frame = 0;  // bit_flip: 0 = first byte, 1 = payload byte
    int bit = 0;    // bit_flip: 0..7 data, 8 parity

    static Fault bit_flip(int chain, int hop, int frame, int bit) { return {Kind::bit_flip, chain, hop, frame, bit}; }
    static Fault drop(int chain, int hop) { return {Kind::drop, chain, hop, 0, 0}; }
};

enum class CommandOutcome { in_flight, consumed, dropped, exited };

struct CommandRecord {
    int chain = 0;
    std::int64_t send_us = 0;
    std::int64_t outcome_us = -1;
    CommandOutcome outcome = CommandOutcome::in_flight;
};

struct OutcomeCounts {
    std::size_t injected = 0, consumed = 0, dropped = 0, exited = 0, in_flight = 0;
};

/// Control-unit side timing of one injected packet.
struct PacketTiming {
    std::int64_t send_us = 0;
    std::int64_t arrival_us = 0;  // reached the control unit
    std::int64_t launch_us = 0;   // frames put on the chain
    std::size_t commands = 0;
};

/// Encoded command tagged with its destination chain.
struct ChainFrames {
    int chain = 0;
    FrameSequence frames;
};

class ChainSimulator {
public:
    ChainSimulator(Topology topology, LatencyModel latency, std::uint64_t seed = 0)
        : topology_(std::move(topology)), latency_(latency), rng_(seed) {
        topology_.validate();
        latency_.validate();
        units_.resize(topology_.chain_lengths.size());
        rx_.resize(topology_.chain_lengths.size());
        traces_.resize(topology_.chain_lengths.size());
        for (std::size_t c = 0; c < units_.size(); ++c) {
            const auto len = static_cast<std::size_t>(topology_.chain_lengths[c]);
            units_[c].resize(len);
            rx_[c].resize(len);
            traces_[c].assign(len, std::vector<TraceSample>{TraceSample{0, std::nullopt}});
        }
    }

    const Topology& topology() const { return topology_; }
    const LatencyModel& latency() const { return latency_; }
    std::int64_t clock_us() const { return clock_us_; }
    bool idle() const { return queue_.empty(); }

    const UnitState& unit(int chain, int unit) const { return units_.at(idx(chain)).at(idx(unit)); }
    const std::vector<TraceSample>& trace(int chain, int unit) const { return traces_.at(idx(chain)).at(idx(unit)); }
    const std::vector<SimEvent>& log() const { return log_; }
    const std::vector<CommandRecord>& commands() const { return commands_; }
    const std::vector<PacketTiming>& packets() const { return packets_; }

    /// Send up to five commands for one chain.
    void inject_packet(int chain, const std::vector<VibrationCommand>& commands, std::int64_t send_time_us) {
        std::vector<FrameSequence> frames;
        frames.reserve(commands.size());
        for (const auto& c : commands) frames.push_back(encode(c));
        inject_frames(chain, std::move(frames), send_time_us);
    }

    /// Same as inject_packet but with raw (possibly corrupt) frames.
    void inject_frames(int chain, std::vector<FrameSequence> commands, std::int64_t send_time_us) {
        std::vector<ChainFrames> tagged;
        tagged.reserve(commands.size());
        for (auto& f : commands) tagged.push_back({chain, std::move(f)});
        inject_mixed(std::move(tagged), send_time_us);
    }

    /// One packet whose commands may address different chains. The control
    /// unit launches all of them at once.
    void inject_mixed(std::vector<ChainFrames> commands, std::int64_t send_time_us) {
        if (commands.empty()) throw ValidationError("empty packet");
        if (commands.size() > kMaxCommandsPerPacket) {
            throw PacketOverflowError("packet carries " + std::to_string(commands.size()) +
                                      " commands, limit is 5");
        }
        if (send_time_us < clock_us_) throw ValidationError("send time precedes simulation clock");
        for (const auto& c : commands) {
            check_chain(c.chain);
            if (c.frames.empty()) throw ValidationError("empty frame sequence");
        }
        PendingPacket p;
        p.chain = commands.front().chain;
        for (auto& c : commands) {
            commands_.push_back({c.chain, send_time_us, -1, CommandOutcome::in_flight});
            p.commands.push_back({commands_.size() - 1, c.chain, std::move(c.frames)});
        }
        schedule_packet(std::move(p), send_time_us);
    }

    /// Host request asking the control unit to STOP every unit on every chain.
    /// Generated by the control unit itself, so the five-command limit does
    /// not apply; all chains are driven in the same launch.
    void inject_stop_all(std::int64_t send_time_us) {
        if (send_time_us < clock_us_) throw ValidationError("send time precedes simulation clock");
        PendingPacket p;
        for (int c = 0; c < topology_.chain_count(); ++c) {
            for (int a = 0; a < topology_.chain_lengths[idx(c)]; ++a) {
                commands_.push_back({c, send_time_us, -1, CommandOutcome::in_flight});
                p.commands.push_back({commands_.size() - 1, c, encode(VibrationCommand::stop(a))});
            }
        }
        schedule_packet(std::move(p), send_time_us);
    }

    /// Arm a one-shot fault on the next matching frame at (chain, hop).
    void inject_fault(const Fault& f) {
        check_chain(f.chain);
        if (f.hop < 0 || f.hop >= topology_.chain_lengths[idx(f.chain)]) {
            throw TopologyError("fault hop outside chain");
        }
        if (f.kind == Fault::Kind::bit_flip && (f.frame < 0 || f.frame > 1 || f.bit < 0 || f.bit > 8)) {
            throw TopologyError("bit flip must target frame 0..1, bit 0..8");
        }
        faults_.push_back(f);
    }

    /// Apply every event with timestamp <= t_us; returns the state changes and
    /// diagnostics produced, in order.
    std::vector<SimEvent> run_until(std::int64_t t_us) {
        if (t_us < clock_us_) throw ValidationError("run_until target precedes clock");
        const std::size_t first = log_.size();
        while (!queue_.empty() && queue_.top().t_us <= t_us) {
            Event e = queue_.top();
            queue_.pop();
            clock_us_ = e.t_us;
            dispatch(e);
        }
        clock_us_ = t_us;
        return {log_.begin() + static_cast<std::ptrdiff_t>(first), log_.end()};
    }

    /// Run until no events remain.
    std::vector<SimEvent> run_all() {
        std::int64_t last = clock_us_;
        if (!queue_.empty()) {
            // Timeouts are the latest thing any event can schedule.
            std::vector<SimEvent> out;
            while (!queue_.empty()) {
                auto part = run_until(queue_.top().t_us);
                out.insert(out.end(), part.begin(), part.end());
            }
            return out;
        }
        return run_until(last);
    }

    OutcomeCounts outcome_counts() const {
        OutcomeCounts c;
        c.injected = commands_.size();
        for (const auto& r : commands_) {
            switch (r.outcome) {
                case CommandOutcome::consumed: ++c.consumed; break;
                case CommandOutcome::dropped: ++c.dropped; break;
                case CommandOutcome::exited: ++c.exited; break;
                case CommandOutcome::in_flight: ++c.in_flight; break;
            }
        }
        return c;
    }

    /// Drive state of a unit at time t, reconstructed from its trace.
    std::optional<DriveParams> drive_at(int chain, int unit, std::int64_t t_us) const {
        const auto& tr = trace(chain, unit);
        auto it = std::upper_bound(tr.begin(), tr.end(), t_us,
                                   [](std::int64_t t, const TraceSample& s) { return t < s.t_us; });
        if (it == tr.begin()) return std::nullopt;
        return std::prev(it)->drive;
    }

    std::vector<UnitAddress> vibrating_units_at(std::int64_t t_us) const {
        std::vector<UnitAddress> out;
        for (int c = 0; c < topology_.chain_count(); ++c) {
            for (int u = 0; u < topology_.chain_lengths[idx(c)]; ++u) {
                if (drive_at(c, u, t_us)) out.push_back({c, u});
            }
        }
        return out;
    }

    /// Actuator acceleration (arbitrary units) at time t: zero when the
    /// actuator is off, else duty(intensity) * wave(2 pi f t).
    double sample_acceleration(int chain, int unit, std::int64_t t_us) const {
        const auto drive = drive_at(chain, unit, t_us);
        if (!drive) return 0.0;
        return acceleration_amplitude(drive->intensity) *
               waveform_value(drive->waveform, LevelTables::frequency_hz(drive->frequency_index),
                              static_cast<double>(t_us) * 1e-6);
    }

    /// Same, with a sub-microsecond time argument in seconds.
    double sample_acceleration_s(int chain, int unit, double t_s) const {
        const auto drive = drive_at(chain, unit, static_cast<std::int64_t>(std::floor(t_s * 1e6)));
        if (!drive) return 0.0;
        return acceleration_amplitude(drive->intensity) *
               waveform_value(drive->waveform, LevelTables::frequency_hz(drive->frequency_index), t_s);
    }

    /// Strictly increasing amplitude map of intensity levels.
    static double acceleration_amplitude(int intensity) { return LevelTables::duty_fraction(intensity); }

    static double waveform_value(WaveformSel w, double hz, double t_s) {
        const double s = std::sin(2 * std::numbers::pi * hz * t_s);
        if (w == WaveformSel::sine) return s;
        return s >= 0 ? 1.0 : -1.0;
    }

private:
    struct QueuedCommand {
        std::size_t id;
        int chain;
        FrameSequence frames;
    };
    struct PendingPacket {
        int chain = 0;  // first command's chain; only used for queue ordering
        std::vector<QueuedCommand> commands;
    };

    enum class EventKind { packet_arrival, frame_arrival, timeout };

    struct Event {
        std::int64_t t_us;
        int chain;
        std::uint64_t seq;
        EventKind kind;
        int unit = 0;
        FrameByte frame{};
        std::size_t command = 0;
        int frame_index = 0;
        std::uint64_t token = 0;
        std::size_t packet = 0;
    };

    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.t_us != b.t_us) return a.t_us > b.t_us;
            if (a.chain != b.chain) return a.chain > b.chain;
            return a.seq > b.seq;
        }
    };

    // Link-layer receive state of one unit.
    struct Receiver {
        enum class Pending { none, own_payload, forward_payload };
        Pending pending = Pending::none;
        std::size_t pending_command = 0;
        FrameByte pending_byte1{};
        std::uint64_t await_token = 0;
        std::optional<std::size_t> discard_command;
    };

    static std::size_t idx(int i) { return static_cast<std::size_t>(i); }

    void check_chain(int chain) const {
        if (chain < 0 || chain >= topology_.chain_count()) {
            throw TopologyError("unknown chain " + std::to_string(chain));
        }
    }

    void push(Event e) {
        e.seq = next_seq_++;
        queue_.push(e);
    }

    void schedule_packet(PendingPacket p, std::int64_t send_time_us) {
        std::int64_t arrival = send_time_us + latency_.ble_one_way_us();
        if (latency_.ble_jitter_us > 0) {
            std::uniform_int_distribution<std::int64_t> jitter(0, static_cast<std::int64_t>(latency_.ble_jitter_us));
            arrival += jitter(rng_);
        }
        packets_.push_back({send_time_us, arrival, -1, p.commands.size()});
        pending_packets_.push_back(std::move(p));
        Event e{};
        e.t_us = arrival;
        e.chain = pending_packets_.back().chain;
        e.kind = EventKind::packet_arrival;
        e.packet = pending_packets_.size() - 1;
        push(e);
    }

    void log_event(int chain, int unit, SimEventType type, std::string detail = "-") {
        log_.push_back({clock_us_, chain, unit, type, std::move(detail)});
    }

    void set_drive(int chain, int unit, std::optional<DriveParams> drive) {
        auto& st = units_[idx(chain)][idx(unit)];
        if (st.current == drive) return;
        st.current = drive;
        traces_[idx(chain)][idx(unit)].push_back({clock_us_, drive});
    }

    void finish(std::size_t command, CommandOutcome outcome) {
        auto& r = commands_[command];
        if (r.outcome != CommandOutcome::in_flight) return;
        r.outcome = outcome;
        r.outcome_us = clock_us_;
    }

    void dispatch(const Event& e) {
        switch (e.kind) {
            case EventKind::packet_arrival: on_packet(e); break;
            case EventKind::frame_arrival: on_frame(e); break;
            case EventKind::timeout: on_timeout(e); break;
        }
    }

    void on_packet(const Event& e) {
        const std::int64_t launch = std::max(clock_us_, control_unit_free_us_);
        if (launch > clock_us_) {
            // Control unit still busy: requeue at the time it frees up.
            Event again = e;
            again.t_us = launch;
            push(again);
            return;
        }
        control_unit_free_us_ = clock_us_ + latency_.processing_us();
        packets_[e.packet].launch_us = clock_us_;
        const auto& p = pending_packets_[e.packet];
        for (const auto& cmd : p.commands) {
            for (std::size_t i = 0; i < cmd.frames.size(); ++i) {
                Event f{};
                f.t_us = clock_us_ + latency_.hop_duration_us();
                f.chain = cmd.chain;
                f.kind = EventKind::frame_arrival;
                f.unit = 0;
                f.frame = cmd.frames[i];
                f.command = cmd.id;
                f.frame_index = static_cast<int>(i);
                push(f);
            }
        }
        pending_packets_[e.packet].commands.clear();
    }

    void forward(const Event& e, FrameByte frame) {
        const int next = e.unit + 1;
        if (next >= topology_.chain_lengths[idx(e.chain)]) return;  // left the chain
        Event f = e;
        f.t_us = clock_us_ + latency_.hop_duration_us();
        f.unit = next;
        f.frame = frame;
        push(f);
    }

    bool take_fault(const Event& e, FrameByte& frame) {
        for (auto it = faults_.begin(); it != faults_.end(); ++it) {
            if (it->chain != e.chain || it->hop != e.unit) continue;
            if (it->kind == Fault::Kind::drop && e.frame_index == 0) {
                faults_.erase(it);
                return true;
            }
            if (it->kind == Fault::Kind::bit_flip && it->frame == e.frame_index) {
                frame = frame.with_bit_flipped(it->bit);
                faults_.erase(it);
                return false;
            }
        }
        return false;
    }

    void on_frame(const Event& e) {
        auto& rx = rx_[idx(e.chain)][idx(e.unit)];
        auto& st = units_[idx(e.chain)][idx(e.unit)];
        const int chain_len = topology_.chain_lengths[idx(e.chain)];

        if (rx.discard_command && *rx.discard_command == e.command) return;

        FrameByte frame = e.frame;
        if (take_fault(e, frame)) {
            rx.discard_command = e.command;
            abandon_pending(e, rx, st);
            finish(e.command, CommandOutcome::dropped);
            log_event(e.chain, e.unit, SimEventType::fault_drop, "cmd=" + std::to_string(e.command));
            return;
        }

        // A byte of a new command while a payload was pending: the line went
        // idle between commands, so the unit resynchronizes.
        if (rx.pending != Receiver::Pending::none && rx.pending_command != e.command) {
            if (rx.pending == Receiver::Pending::own_payload) {
                log_event(e.chain, e.unit, SimEventType::abort, "cmd=" + std::to_string(rx.pending_command));
            }
            abandon_pending(e, rx, st);
        }

        if (rx.pending != Receiver::Pending::none) {
            const auto pending = rx.pending;
            rx.pending = Receiver::Pending::none;
            if (!frame.parity_ok()) {
                if (pending == Receiver::Pending::own_payload) st.phase = UnitPhase::idle;
                finish(e.command, CommandOutcome::dropped);
                log_event(e.chain, e.unit, SimEventType::parity_drop, "cmd=" + std::to_string(e.command));
                if (pending == Receiver::Pending::own_payload) set_drive(e.chain, e.unit, std::nullopt);
                return;
            }
            if (pending == Receiver::Pending::forward_payload) {
                forward(e, frame);
                return;
            }
            const FrameByte pair[2] = {rx.pending_byte1, frame};
            const VibrationCommand cmd = decode(pair);
            st.phase = UnitPhase::active;
            set_drive(e.chain, e.unit, DriveParams{cmd.intensity, cmd.frequency_index, cmd.waveform});
            finish(e.command, CommandOutcome::consumed);
            std::ostringstream d;
            d << "i=" << cmd.intensity << " f=" << cmd.frequency_index << " w=" << to_string(cmd.waveform);
            log_event(e.chain, e.unit, SimEventType::start, d.str());
            return;
        }

        if (!frame.parity_ok()) {
            rx.discard_command = e.command;
            finish(e.command, CommandOutcome::dropped);
            log_event(e.chain, e.unit, SimEventType::parity_drop, "cmd=" + std::to_string(e.command));
            return;
        }
        if (e.frame_index != 0) {
            // Stray payload byte whose first byte never reached this unit.
            rx.discard_command = e.command;
            finish(e.command, CommandOutcome::dropped);
            log_event(e.chain, e.unit, SimEventType::parity_drop, "stray cmd=" + std::to_string(e.command));
            return;
        }

        const HopDecision hop = apply_hop(frame);
        const bool start = expects_second_byte(frame);
        if (!hop.consumed()) {
            rx.pending = start ? Receiver::Pending::forward_payload : Receiver::Pending::none;
            rx.pending_command = e.command;
            if (e.unit + 1 >= chain_len) {
                finish(e.command, CommandOutcome::exited);
                log_event(e.chain, chain_len, SimEventType::exit,
                          "addr=" + std::to_string(frame_address(hop.forwarded)));
            }
            forward(e, hop.forwarded);
            return;
        }
        if (!start) {
            st.phase = UnitPhase::idle;
            set_drive(e.chain, e.unit, std::nullopt);
            finish(e.command, CommandOutcome::consumed);
            log_event(e.chain, e.unit, SimEventType::stop);
            return;
        }
        st.phase = UnitPhase::await_second_byte;
        rx.pending = Receiver::Pending::own_payload;
        rx.pending_command = e.command;
        rx.pending_byte1 = frame;
        rx.await_token = ++next_token_;
        log_event(e.chain, e.unit, SimEventType::await, "cmd=" + std::to_string(e.command));
        Event t{};
        t.t_us = clock_us_ + kAwaitTimeoutUs;
        t.chain = e.chain;
        t.kind = EventKind::timeout;
        t.unit = e.unit;
        t.command = e.command;
        t.token = rx.await_token;
        push(t);
    }

    void abandon_pending(const Event& e, Receiver& rx, UnitState& st) {
        if (rx.pending == Receiver::Pending::own_payload) {
            finish(rx.pending_command, CommandOutcome::dropped);
            st.phase = UnitPhase::idle;
            set_drive(e.chain, e.unit, std::nullopt);
        }
        rx.pending = Receiver::Pending::none;
    }

    void on_timeout(const Event& e) {
        auto& rx = rx_[idx(e.chain)][idx(e.unit)];
        auto& st = units_[idx(e.chain)][idx(e.unit)];
        if (rx.pending != Receiver::Pending::own_payload || rx.await_token != e.token) return;
        rx.pending = Receiver::Pending::none;
        st.phase = UnitPhase::idle;
        set_drive(e.chain, e.unit, std::nullopt);
        finish(e.command, CommandOutcome::dropped);
        log_event(e.chain, e.unit, SimEventType::timeout, "cmd=" + std::to_string(e.command));
    }

    Topology topology_;
    LatencyModel latency_;
    std::mt19937_64 rng_;
    std::int64_t clock_us_ = 0;
    std::int64_t control_unit_free_us_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_token_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::vector<std::vector<UnitState>> units_;
    std::vector<std::vector<Receiver>> rx_;
    std::vector<std::vector<std::vector<TraceSample>>> traces_;
    std::vector<SimEvent> log_;
    std::vector<CommandRecord> commands_;
    std::vector<PacketTiming> packets_;
    std::vector<PendingPacket> pending_packets_;
    std::vector<Fault> faults_;
};

}  // namespace vibraforge
