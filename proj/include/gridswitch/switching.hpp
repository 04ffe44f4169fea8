#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gridswitch/config.hpp"
#include "gridswitch/controllers.hpp"
#include "gridswitch/dynamics.hpp"

namespace gridswitch {

/// max_i |omega_i| * base_hz > trigger_hz.
bool event_trigger(const Vec& omega, double trigger_hz, double base_hz);

/// Mean of the stage costs over rows [begin, end) of a trajectory.
double batch_cost(const Trajectory& traj, const GridModel& model, double lambda, std::size_t begin, std::size_t end);

enum class Phase { Deployment, Selection, Trial };
std::string to_string(Phase phase);

/// Controller-selection state of Algorithm 1.
struct SwitcherState {
    std::vector<double> P;
    std::vector<double> G;  // accumulated importance-weighted costs
    Phase phase = Phase::Deployment;
    int committed = 0;       // controller in use during deployment and trial
    bool selection_flag = false;

    // Selection bookkeeping.
    long phase_start = 0;    // step at which the selection phase began
    int batch = 0;           // j
    long batch_start = 0;    // t_j
    long batch_end = 0;      // t_{j+1}
    int arm = 0;             // I_j
    double batch_sum = 0.0;  // running sum of stage costs in the batch
    int batch_rows = 0;
    long trial_left = 0;

    static SwitcherState fresh(int m, int initial = 0);
};

/// G_I += g / P_I, then P = softmax(-xi G) with max subtraction.
void bandit_update(SwitcherState& state, int arm, double g, double xi);

/// Index with the largest P, lowest index on ties.
int argmax_probability(const std::vector<double>& P);

/// Inverse-CDF draw from P.
int sample_arm(const std::vector<double>& P, Rng& rng);

struct SwitchLogRow {
    long step = 0;
    double t = 0.0;
    Phase phase = Phase::Deployment;
    int batch = -1;
    int arm = -1;
    bool updated = false;  // a batch closed on this step
    double g = 0.0;
    std::vector<double> P;
};

void write_switch_log(const std::vector<SwitchLogRow>& log, std::ostream& out);

/// Drives Algorithm 1 from per-step observations. `begin_step` returns the
/// controller acting over the step; `end_step` feeds the step's stage cost.
class OnlineSwitcher {
public:
    OnlineSwitcher(int m, const SwitchConfig& config, double base_hz, std::uint64_t seed, int initial = 0);

    int begin_step(long step, const Vec& omega);
    void end_step(long step, double stage_cost);

    const SwitcherState& state() const { return state_; }
    const std::vector<SwitchLogRow>& log() const { return log_; }
    void set_dt(double dt) { dt_ = dt; }
    void set_logging(bool on) { logging_ = on; }

private:
    void start_batch(long step);

    SwitchConfig config_;
    double base_hz_;
    double dt_ = 0.01;
    Rng rng_;
    SwitcherState state_;
    std::vector<SwitchLogRow> log_;
    bool logging_ = true;
};

/// Algorithm 1 as a policy source over a controller pool.
class OnlineSwitchingPolicy : public PolicySource {
public:
    OnlineSwitchingPolicy(const std::vector<Controller>& pool, const GridModel& model, const SwitchConfig& config,
                          double lambda, std::uint64_t seed, int initial = 0);

    int select(long step, double t, const GridState& state, int mode) override;
    void observe(long step, const GridState& state, const Vec& u) override;
    const Controller& controller(int id) const override { return pool_[static_cast<std::size_t>(id)]; }

    const OnlineSwitcher& switcher() const { return switcher_; }
    OnlineSwitcher& switcher() { return switcher_; }

private:
    const std::vector<Controller>& pool_;
    const GridModel& model_;
    double lambda_;
    OnlineSwitcher switcher_;
};

/// Oracle: the controller trained for the current mode, swapped instantly.
class KnownSwitchingPolicy : public PolicySource {
public:
    /// mode_to_controller[q] is the pool index used in mode q.
    KnownSwitchingPolicy(const std::vector<Controller>& pool, std::vector<int> mode_to_controller);
    int select(long, double, const GridState&, int mode) override;
    const Controller& controller(int id) const override { return pool_[static_cast<std::size_t>(id)]; }

private:
    const std::vector<Controller>& pool_;
    std::vector<int> map_;
};

/// Pool index per mode, matched through the controllers' trained_mode labels.
std::vector<int> match_pool_to_modes(const std::vector<Controller>& pool, const GridModel& model);

}  // namespace gridswitch
