#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "vibraforge/errors.hpp"
#include "vibraforge/topology.hpp"

namespace vibraforge {

struct PowerEstimate {
    double current_a = 0;
    double battery_hours = 0;
};

/// Constant-current model: control unit + idle MCUs + active actuators
/// weighted by the fraction of time each is on.
inline PowerEstimate estimate_power(int unit_count, double total_duty, double capacity_mah) {
    if (unit_count < 0 || total_duty < 0 || total_duty > unit_count) {
        throw ValidationError("invalid duty profile");
    }
    if (!(capacity_mah > 0)) throw ValidationError("battery capacity must be positive");
    PowerEstimate e;
    e.current_a = Electrical::control_unit_current_a + Electrical::mcu_current_a * unit_count +
                  Electrical::actuator_current_a * total_duty;
    e.battery_hours = capacity_mah / 1000.0 / e.current_a;
    return e;
}

/// `duty_profile` holds one active fraction in [0, 1] per unit of the topology.
inline PowerEstimate estimate_power(const Topology& topology, const std::vector<double>& duty_profile,
                                    double capacity_mah) {
    if (static_cast<int>(duty_profile.size()) != topology.unit_count()) {
        throw ValidationError("duty profile must list every unit");
    }
    for (double d : duty_profile) {
        if (!(d >= 0 && d <= 1)) throw ValidationError("duty fraction outside [0, 1]");
    }
    return estimate_power(topology.unit_count(), std::accumulate(duty_profile.begin(), duty_profile.end(), 0.0),
                          capacity_mah);
}

struct BatteryScenario {
    std::string label;
    int units = 0;
    double always_on = 0;  // sum of duty fractions
    double capacity_mah = 0;
};

/// Battery scenarios quoted for the arm display and the four-chain display.
inline std::vector<BatteryScenario> reference_battery_scenarios() {
    return {{"2x16_idle_500mAh", 32, 0, 500},
            {"2x16_2on_500mAh", 32, 2, 500},
            {"4x16_idle_8200mAh", 64, 0, 8200},
            {"4x16_8on_8200mAh", 64, 8, 8200}};
}

}  // namespace vibraforge
