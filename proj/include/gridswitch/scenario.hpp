#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "gridswitch/config.hpp"
#include "gridswitch/grid_model.hpp"

namespace gridswitch {

/// Everything a scenario file describes.
///
/// File layout (INI style, one `key = value` per line, lists whitespace separated):
///
///   [grid]          name, base_hz, n, lines ("0-1 1-2"), susceptance, damping,
///                   injection, cost, u_lower, u_upper
///   [modes]         labels, inertia_<q> per mode (or `nominal`, scaled by the labels)
///   [disturbances]  magnitude, event_times, window_s, events, event_<i>_time, event_<i>_step
///   [switching]     n_s, n_t, xi, tau, trigger_hz, reset_bandit, horizon_s, dwell_s,
///                   randomized_dwell, initial_probs, transition, switch_times, mode_sequence
///   [training]      see TrainConfig
///
/// Angles are radians, frequency deviations per-unit of base_hz.
struct Scenario {
    GridModel grid;
    InertiaSchedule schedule = InertiaSchedule::constant(0);
    DisturbanceProfile disturbances;
    ScheduleSettings schedule_settings;
    DisturbanceSettings disturbance_settings;
    SwitchConfig switching;
    TrainConfig training;

    bool operator==(const Scenario&) const = default;
};

/// Throws ConfigError naming the offending field.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(std::istream& in);
Scenario parse_scenario_string(const std::string& text);

void save_scenario(const Scenario& scenario, const std::filesystem::path& path);
void write_scenario(const Scenario& scenario, std::ostream& out);
std::string scenario_to_string(const Scenario& scenario);

}  // namespace gridswitch
