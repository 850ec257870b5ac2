#pragma once

// How closely the simulated actuator output follows a source waveform:
// compile the waveform onto one unit, simulate, rebuild the acceleration
// trace and compare its envelope with the source envelope at 200 Hz.

#include <cmath>
#include <cstdint>
#include <vector>

#include "vibraforge/pattern.hpp"
#include "vibraforge/scheduler.hpp"
#include "vibraforge/segmentation.hpp"
#include "vibraforge/simulator.hpp"
#include "vibraforge/waveform.hpp"

namespace vibraforge {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ValidationError("pearson: need two equal-length series");
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 || sbb == 0) return 0;
    return sab / std::sqrt(saa * sbb);
}

struct FidelityResult {
    double correlation = 0;
    std::vector<double> source_envelope;     // per 5 ms frame
    std::vector<double> simulated_envelope;  // per 5 ms frame, latency removed
    std::size_t commands = 0;
};

/// `duration_ms` defaults to the waveform's own duration.
inline FidelityResult approximation_fidelity(const Waveform& w, std::optional<double> duration_ms = std::nullopt,
                                             const LatencyModel& latency = {}) {
    const double len = duration_ms ? *duration_ms : vibraforge::duration_ms(w).value_or(1000.0);
    PatternDocument doc;
    doc = create_chain_grid(doc, 1);
    doc.waveform_library["w"] = w;
    doc.assignments.push_back({{0, 0}, "w", 0, len});
    const auto stream = compile(doc);

    ChainSimulator sim(doc.topology(), latency);
    SimLoopbackEndpoint ep(sim);
    dispatch(schedule(stream).packets, ep);
    sim.run_all();

    const double rate = kCompileSampleRateHz;
    const auto source = sample(w, rate, len);
    const double delay_s = static_cast<double>(latency.ble_one_way_us() + latency.hop_duration_us()) * 1e-6;
    SampledWaveform trace;
    trace.sample_rate_hz = rate;
    trace.samples.resize(source.samples.size());
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        trace.samples[i] = sim.sample_acceleration_s(0, 0, delay_s + static_cast<double>(i) / rate);
    }
    const auto env_src = analytic_envelope(source);
    const auto env_sim = analytic_envelope(trace);

    FidelityResult r;
    r.commands = stream.size();
    for (std::size_t k = 0;; ++k) {
        const auto i = static_cast<std::size_t>(std::llround(static_cast<double>(k) * rate / 200.0));
        if (i >= env_src.size()) break;
        r.source_envelope.push_back(env_src[i]);
        r.simulated_envelope.push_back(env_sim[i]);
    }
    r.correlation = pearson(r.source_envelope, r.simulated_envelope);
    return r;
}

}  // namespace vibraforge
