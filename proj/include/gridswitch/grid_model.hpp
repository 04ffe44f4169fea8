#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridswitch/common.hpp"

namespace gridswitch {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Transmission line between two buses (0-based), oriented from -> to.
struct Line {
    int from = 0;
    int to = 0;
    double susceptance = 0.0;  // per-unit, > 0

    bool operator==(const Line&) const = default;
};

/// Network graph, per-bus physical parameters and the inertia of every mode.
///
/// Modes are indexed from 0. `mode_labels[q]` is the scale factor relative to
/// nominal inertia that names the mode (0.3, 1.0, 5.0 for the bundled cases).
struct GridModel {
    std::string name;
    int n = 0;
    std::vector<Line> lines;
    Vec damping;    // D_i > 0
    Vec injection;  // p_i
    Vec cost;       // c_i > 0
    Vec u_lower;
    Vec u_upper;
    std::vector<double> mode_labels;
    std::vector<Vec> inertia;  // diagonal of M_q, one entry per mode
    double base_hz = 60.0;

    int mode_count() const { return static_cast<int>(inertia.size()); }
    const Vec& inertia_of(int mode) const;

    /// Throws ModelError naming the first violated invariant.
    void validate() const;

    bool operator==(const GridModel&) const;
};

/// Incidence matrix E (n x lines): +1 at `from`, -1 at `to`.
/// Throws ModelError when the graph is disconnected.
Mat incidence_matrix(const GridModel& model);

/// E diag(B) E^T.
Mat weighted_laplacian(const GridModel& model);

/// E E^T, the communication Laplacian used by the integral layer.
Mat communication_laplacian(const GridModel& model);

bool is_connected(int n, const std::vector<Line>& lines);

/// Piecewise-constant, right-continuous mode signal q(t).
/// `modes.size() == switch_times.size() + 1`; modes[0] holds on [0, switch_times[0]).
struct InertiaSchedule {
    std::vector<double> switch_times;
    std::vector<int> modes;

    static InertiaSchedule constant(int mode);

    int mode_at(double t) const;
    int interval_count() const { return static_cast<int>(modes.size()); }
    void validate(int mode_count) const;

    bool operator==(const InertiaSchedule&) const = default;
};

/// Discrete-time Markov chain over inertia modes.
struct InertiaChain {
    std::vector<double> initial;  // length m
    Mat transition;               // m x m, row-stochastic

    /// The 3-mode chain over {0.3, 1.0, 5.0}: initial (0.10, 0.45, 0.45),
    /// low -> {stay, up} 0.5/0.5, mid -> {down, stay, up} 0.3/0.4/0.3,
    /// high -> {down, stay} 0.5/0.5.
    static InertiaChain standard_three_mode();

    /// Throws ModelError unless rows are stochastic within 1e-12.
    void validate() const;
    int size() const { return static_cast<int>(initial.size()); }
};

struct ScheduleSettings {
    double horizon_s = 20.0;
    double dwell_s = 5.0;
    bool randomized_dwell = false;
    /// Empty means "use the standard 3-mode chain" (only valid for m == 3).
    std::optional<InertiaChain> chain;

    bool operator==(const ScheduleSettings&) const;
};

/// Resolves the chain for a model with `mode_count` modes.
InertiaChain resolve_chain(const ScheduleSettings& settings, int mode_count);

/// Samples a schedule: initial mode from chain.initial, a transition every
/// dwell_s seconds (or uniform in [0.5, 1.5] * dwell_s when randomized).
InertiaSchedule sample_inertia_schedule(std::uint64_t seed, double horizon_s, double dwell_s,
                                        const InertiaChain& chain, bool randomized_dwell = false);

/// A step of net power injection at a given time.
struct DisturbanceEvent {
    double time = 0.0;
    Vec step;  // per-bus Δd

    bool operator==(const DisturbanceEvent& o) const { return time == o.time && step == o.step; }
};

/// Δd(t) is the step of the latest event with time <= t, zero before the first event.
struct DisturbanceProfile {
    std::vector<DisturbanceEvent> events;

    Vec value_at(double t, int n) const;
    double sup_inf_norm() const;
    double sup_two_norm() const;
    void validate(int n) const;

    bool operator==(const DisturbanceProfile&) const = default;
};

struct DisturbanceSettings {
    double magnitude = 0.3;                      // ∞-norm bound on every generated step
    std::vector<double> event_times{0.1, 7.0};   // switching evaluation protocol
    double window_s = 3.0;                       // transient window after each event

    bool operator==(const DisturbanceSettings&) const = default;
};

/// Uniform step in [-magnitude, magnitude] on a single uniformly drawn bus.
Vec sample_disturbance_step(Rng& rng, int n, double magnitude);

}  // namespace gridswitch
