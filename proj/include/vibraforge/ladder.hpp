#pragma once

// DC model of one chain's power wiring.
//
// Three conductors run along the chain: the MCU supply line, the actuator
// supply line and a shared ground. Each segment between neighbouring units
// (and between the control unit and unit 0) has the per-segment resistance
// from WireModel. Every unit draws a constant MCU current from its MCU line to
// ground; an active actuator is a resistive load sized to draw its nominal
// current at the nominal supply voltage. Voltages are reported relative to the
// unit's local ground, which is what the unit actually sees. A CLOSED chain
// is also fed from its tail through a return cable of `loop_return_segments`.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "vibraforge/errors.hpp"
#include "vibraforge/topology.hpp"

namespace vibraforge {

struct NodeVoltages {
    double mcu_v = 0;
    double actuator_v = 0;
};

struct LadderSolution {
    std::vector<NodeVoltages> nodes;  // one per unit, relative to local ground

    NodeVoltages last() const { return nodes.empty() ? NodeVoltages{} : nodes.back(); }
};

inline LadderSolution solve_ladder(const WireModel& wires, LoopMode mode, const std::vector<bool>& active,
                                   double supply_v = 5.0) {
    wires.validate();
    const int n = static_cast<int>(active.size());
    LadderSolution out;
    if (n == 0) return out;

    const int dim = 3 * n;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    auto mcu = [](int j) { return j; };
    auto act = [n](int j) { return n + j; };
    auto gnd = [n](int j) { return 2 * n + j; };

    auto link = [&](int a, int b, double cond) {
        g(a, a) += cond;
        g(b, b) += cond;
        g(a, b) -= cond;
        g(b, a) -= cond;
    };
    auto to_source = [&](int a, double cond, double volts) {
        g(a, a) += cond;
        rhs(a) += cond * volts;
    };

    struct Line {
        std::function<int(int)> index;
        double ohm;
        double source_v;
    };
    const Line lines[] = {{mcu, wires.mcu_line_ohm, supply_v},
                          {act, wires.actuator_line_ohm, supply_v},
                          {gnd, wires.ground_ohm, 0.0}};
    for (const auto& line : lines) {
        const double cond = 1.0 / line.ohm;
        to_source(line.index(0), cond, line.source_v);
        for (int j = 0; j + 1 < n; ++j) link(line.index(j), line.index(j + 1), cond);
        if (mode == LoopMode::closed) {
            to_source(line.index(n - 1), cond / wires.loop_return_segments, line.source_v);
        }
    }

    const double load_cond = Electrical::actuator_current_a / supply_v;
    for (int j = 0; j < n; ++j) {
        rhs(mcu(j)) -= Electrical::mcu_current_a;
        rhs(gnd(j)) += Electrical::mcu_current_a;
        if (active[static_cast<std::size_t>(j)]) link(act(j), gnd(j), load_cond);
    }

    const Eigen::VectorXd v = g.partialPivLu().solve(rhs);
    out.nodes.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        out.nodes[static_cast<std::size_t>(j)] = {v(mcu(j)) - v(gnd(j)), v(act(j)) - v(gnd(j))};
    }
    return out;
}

/// Voltages (MCU line, actuator line) at the last unit of a chain.
inline NodeVoltages last_node_voltages(const WireModel& wires, LoopMode mode, const std::vector<bool>& active,
                                       double supply_v = 5.0) {
    return solve_ladder(wires, mode, active, supply_v).last();
}

/// `count` units with the first `active` of them switched on.
inline std::vector<bool> head_first_activation(int count, int active) {
    std::vector<bool> flags(static_cast<std::size_t>(count), false);
    for (int i = 0; i < active && i < count; ++i) flags[static_cast<std::size_t>(i)] = true;
    return flags;
}

inline NodeVoltages sweep_point(const WireModel& wires, LoopMode mode, int chain_len, int active,
                                double supply_v = 5.0) {
    return last_node_voltages(wires, mode, head_first_activation(chain_len, active), supply_v);
}

/// Targets the wire model is fitted to.
struct CalibrationTargets {
    int sweep_chain_len = 18;        // chain used for the incremental-activation sweep
    int mcu_last_ok = 16;            // MCU line stays >= 2.3 V up to this many active
    int actuator_last_ok = 17;       // actuator line stays >= 0.9 V up to this many active
    int reference_chain_len = 8;     // all-active reference chain for the loop check
    double closed_reference_v = 4.2; // actuator line of that chain in CLOSED mode
};

struct CalibrationResult {
    WireModel wires;
    double open_reference_v = 0;    // actuator line, reference chain, OPEN
    double closed_reference_v = 0;  // actuator line, reference chain, CLOSED
    int iterations = 0;
};

namespace detail {

// Root of a monotone function on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int steps = 64) {
    double flo = f(lo);
    for (int i = 0; i < steps; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Fit the wire model with alternating 1-D searches.
///
///  1. Total actuator-loop resistance per segment (supply + ground) so the
///     0.9 V actuator threshold falls midway between `actuator_last_ok` and
///     the next count.
///  2. Ground share of that resistance so the 2.3 V MCU threshold falls midway
///     between `mcu_last_ok` and the next count.
///  3. Return-cable length so the CLOSED reference chain reads
///     `closed_reference_v`.
///
/// Steps 1 and 2 repeat until the split stops moving. Both supply lines share
/// one per-segment resistance.
inline CalibrationResult calibrate_wires(const CalibrationTargets& t = {}) {
    const double v_mcu = Electrical::mcu_min_voltage_v;
    const double v_act = Electrical::actuator_rated_voltage_v;
    auto make = [](double loop_ohm, double ground_share) {
        WireModel w;
        w.actuator_line_ohm = w.mcu_line_ohm = loop_ohm * (1 - ground_share);
        w.ground_ohm = loop_ohm * ground_share;
        return w;
    };

    double share = 2.0 / 3.0;
    double loop = 0.5;
    CalibrationResult res;
    for (int it = 0; it < 50; ++it) {
        res.iterations = it + 1;
        loop = detail::bisect(
            [&](double r) {
                const auto w = make(r, share);
                return sweep_point(w, LoopMode::open, t.sweep_chain_len, t.actuator_last_ok).actuator_v +
                       sweep_point(w, LoopMode::open, t.sweep_chain_len, t.actuator_last_ok + 1).actuator_v -
                       2 * v_act;
            },
            1e-4, 10.0);
        const double next_share = detail::bisect(
            [&](double s) {
                const auto w = make(loop, s);
                return sweep_point(w, LoopMode::open, t.sweep_chain_len, t.mcu_last_ok).mcu_v +
                       sweep_point(w, LoopMode::open, t.sweep_chain_len, t.mcu_last_ok + 1).mcu_v - 2 * v_mcu;
            },
            1e-3, 1 - 1e-3);
        const bool converged = std::abs(next_share - share) < 1e-12;
        share = next_share;
        if (converged) break;
    }
    res.wires = make(loop, share);
    res.wires.loop_return_segments = detail::bisect(
        [&](double segments) {
            WireModel w = res.wires;
            w.loop_return_segments = segments;
            return sweep_point(w, LoopMode::closed, t.reference_chain_len, t.reference_chain_len).actuator_v -
                   t.closed_reference_v;
        },
        1e-3, 100.0);
    res.open_reference_v =
        sweep_point(res.wires, LoopMode::open, t.reference_chain_len, t.reference_chain_len).actuator_v;
    res.closed_reference_v =
        sweep_point(res.wires, LoopMode::closed, t.reference_chain_len, t.reference_chain_len).actuator_v;
    return res;
}

}  // namespace vibraforge
