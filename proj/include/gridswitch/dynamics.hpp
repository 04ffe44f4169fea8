#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "gridswitch/controllers.hpp"
#include "gridswitch/grid_model.hpp"

namespace gridswitch {

struct GridState {
    Vec delta;  // rad, center-of-inertia coordinates
    Vec omega;  // per-unit
    Vec s;      // integral state

    static GridState zeros(int n) { return {Vec::Zero(n), Vec::Zero(n), Vec::Zero(n)}; }
    bool finite() const;
    bool operator==(const GridState& o) const { return delta == o.delta && omega == o.omega && s == o.s; }
};

class IntegrationError : public std::runtime_error {
public:
    IntegrationError(long step, double time, const std::string& what);
    long step() const { return step_; }
    double time() const { return time_; }

private:
    long step_;
    double time_;
};

/// Precomputed matrices shared by every step on one model.
struct GridOperators {
    Mat E;         // incidence
    Vec B;         // line susceptances
    Mat L;         // E E^T
    Mat P;         // I - 11^T / n
    explicit GridOperators(const GridModel& model);
};

/// p_e(delta) = E diag(B) sin(E^T delta).
Vec electrical_power(const Vec& delta, const GridModel& model);
Vec electrical_power(const Vec& delta, const GridOperators& ops);

/// d p_e / d delta = E diag(B cos(E^T delta)) E^T.
Mat power_jacobian(const Vec& delta, const GridOperators& ops);

/// -C^{-1} omega - E E^T C k s.
Vec integral_rate(const Vec& omega, const Vec& s, double k, const GridModel& model, const GridOperators& ops);

/// s + dt * integral_rate.
Vec integral_step(const GridState& state, const GridModel& model, double k, double dt);

/// One forward-Euler step of the swing dynamics with a given (already saturated) action.
/// The integral state is advanced with gain k when k > 0 and held otherwise.
GridState step(const GridState& state, const Vec& u, const Vec& dd, int mode, double dt, const GridModel& model,
               double k = 0.0);
GridState step(const GridState& state, const Vec& u, const Vec& dd, int mode, double dt, const GridModel& model,
               const GridOperators& ops, double k);

enum class Integrator { Euler, RK4 };

/// One closed-loop step: action computed from the state (and re-evaluated at
/// RK4 stages), disturbance and mode held over the step.
GridState closed_loop_step(const GridState& state, const Controller& ctrl, const Vec& dd, int mode, double dt,
                           const GridModel& model, const GridOperators& ops, Integrator integrator = Integrator::Euler);

/// Chooses the active controller at every step. `observe` receives the
/// applied action, after which the step is integrated.
class PolicySource {
public:
    virtual ~PolicySource() = default;
    virtual int select(long step, double t, const GridState& state, int mode) = 0;
    virtual void observe(long step, const GridState& state, const Vec& u) { (void)step, (void)state, (void)u; }
    virtual const Controller& controller(int id) const = 0;
};

class FixedPolicy : public PolicySource {
public:
    explicit FixedPolicy(const Controller& c, int id = 0) : ctrl_(c), id_(id) {}
    int select(long, double, const GridState&, int) override { return id_; }
    const Controller& controller(int) const override { return ctrl_; }

private:
    const Controller& ctrl_;
    int id_;
};

/// Row k holds the state at t_k = k dt and the action, mode, disturbance and
/// controller applied over [t_k, t_k + dt). `final_state` is x at horizon.
struct Trajectory {
    double dt = 0.01;
    std::vector<GridState> states;
    std::vector<Vec> actions;
    std::vector<int> modes;
    std::vector<Vec> disturbances;
    std::vector<int> controller_ids;
    GridState final_state;

    std::size_t size() const { return states.size(); }
    double time(std::size_t k) const { return static_cast<double>(k) * dt; }
};

struct SimulationOptions {
    double horizon_s = 20.0;
    double dt = 0.01;
    Integrator integrator = Integrator::Euler;
};

Trajectory simulate(const GridModel& model, const InertiaSchedule& schedule, const DisturbanceProfile& disturbances,
                    PolicySource& policy, const GridState& initial, const SimulationOptions& options);

/// Number of rows for a horizon; rounds horizon / dt to the nearest integer.
long step_count(double horizon_s, double dt);

/// Header: t, mode, controller_id, delta_i, omega_i, s_i, u_i, dd_i.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
void save_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);
Trajectory read_trajectory_csv(std::istream& in);
Trajectory load_trajectory_csv(const std::filesystem::path& path);

}  // namespace gridswitch
