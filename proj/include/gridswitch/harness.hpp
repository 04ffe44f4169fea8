#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridswitch/controllers.hpp"
#include "gridswitch/dynamics.hpp"
#include "gridswitch/scenario.hpp"
#include "gridswitch/switching.hpp"
#include "gridswitch/training.hpp"

namespace gridswitch {

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    double median = 0.0;
    double p90 = 0.0;
};

Summary summarize(const std::vector<double>& values);

/// Per-trajectory transient metrics and their summaries.
struct EvalMetrics {
    std::vector<double> freq_deviation;
    std::vector<double> control_cost;
    std::vector<double> total_cost;

    Summary freq() const { return summarize(freq_deviation); }
    Summary control() const { return summarize(control_cost); }
    Summary total() const { return summarize(total_cost); }
};

struct WindowCost {
    double freq = 0.0;
    double control = 0.0;
    double total() const { return freq + control; }
};

/// Mean frequency and control cost over the rows within `window_s` after each
/// event time, averaged over the events.
WindowCost transient_cost(const Trajectory& traj, const GridModel& model, double lambda,
                          const std::vector<double>& event_times, double window_s);

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

struct CrossModeOptions {
    int trajectories = 50;
    std::uint64_t seed = 0;
    double lambda = 10.0;
    double magnitude = 0.3;
    double window_s = 3.0;
    double dt = 0.01;
    int workers = 1;
};

/// Entry (i, q): mean transient cost of controller i under fixed mode q, each
/// trajectory a single step disturbance at t = 0 from equilibrium.
Mat eval_cross_mode(const std::vector<Controller>& pool, const GridModel& model, const CrossModeOptions& options);

enum class MethodKind { Known, Online, Fixed };

struct Method {
    std::string name;
    MethodKind kind = MethodKind::Fixed;
    int index = 0;  // pool index for Fixed, baseline index when `baseline`
    bool baseline = false;
};

struct SwitchingSpec {
    int trajectories = 100;
    std::uint64_t seed = 0;
    double horizon_s = 20.0;
    double dt = 0.01;
    double lambda = 10.0;
    SwitchConfig switching;
    ScheduleSettings schedule;
    DisturbanceSettings disturbances;
    bool include_known = true;
    bool include_online = true;
    bool include_fixed = true;
    int workers = 1;
    /// Trajectory whose full rows and switch log are kept (-1 for none).
    int keep_trajectory = 0;
};

struct SwitchingResult {
    std::vector<Method> methods;
    std::vector<EvalMetrics> metrics;
    std::vector<Trajectory> kept;                 // one per method for keep_trajectory
    std::vector<SwitchLogRow> switch_log;          // online method, keep_trajectory
    std::vector<InertiaSchedule> schedules;

    const EvalMetrics& of(const std::string& name) const;
};

/// The 20 s protocol: Markov inertia schedule, events at the configured times,
/// metrics over the windows after each event. Every method sees the same
/// schedules and disturbances.
SwitchingResult eval_switching(const std::vector<Controller>& pool, const std::vector<Controller>& baselines,
                               const GridModel& model, const SwitchingSpec& spec);

/// Disturbance profile of trajectory j: one sampled step per event time.
DisturbanceProfile sample_event_profile(const GridModel& model, const DisturbanceSettings& settings,
                                        std::uint64_t seed, int index);

/// Start state for a controller: equilibrium at its integral gain.
GridState start_state(const GridModel& model, const Controller& ctrl);

struct SweepPoint {
    double xi = 0.0;
    int tau = 0;
    Summary freq, control, total;
};

/// Online switching per (xi, tau) grid point; duplicates removed, rows sorted by (xi, tau).
std::vector<SweepPoint> sweep_hyperparams(const std::vector<Controller>& pool, const GridModel& model,
                                          const SwitchingSpec& spec, std::vector<double> xis, std::vector<int> taus);

/// Starting point for training a controller of `kind` on the scenario.
Controller initial_controller(ControllerKind kind, const Scenario& scenario, std::uint64_t seed);

/// One Neural-PI per inertia mode; mode q trains with seed `training.seed + q`.
std::vector<TrainReport> train_base_pool(const Scenario& scenario, int workers = 1);

/// A baseline trained over all modes with every parameter learnable.
TrainReport train_baseline(ControllerKind kind, const Scenario& scenario);

/// Switching protocol settings taken from the scenario.
SwitchingSpec switching_spec(const Scenario& scenario, int trajectories, std::uint64_t seed);

void write_metrics_table(const SwitchingResult& result, std::ostream& out);
void write_per_trajectory(const SwitchingResult& result, std::ostream& out);
void write_cross_mode(const Mat& costs, const GridModel& model, std::ostream& out);
void write_sweep(const std::vector<SweepPoint>& rows, std::ostream& out);

/// Writes text to a file, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gridswitch
