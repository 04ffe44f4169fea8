#include "gridswitch/dynamics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace gridswitch {

bool GridState::finite() const
{
    return delta.allFinite() && omega.allFinite() && s.allFinite();
}

IntegrationError::IntegrationError(long step, double time, const std::string& what)
    : std::runtime_error("integration failed at step " + std::to_string(step) + " (t=" + format_double(time) +
                         "): " + what),
      step_(step), time_(time)
{
}

GridOperators::GridOperators(const GridModel& model)
{
    E = incidence_matrix(model);
    B.resize(static_cast<Eigen::Index>(model.lines.size()));
    for (std::size_t l = 0; l < model.lines.size(); ++l) B[static_cast<Eigen::Index>(l)] = model.lines[l].susceptance;
    L = E * E.transpose();
    const auto n = model.n;
    P = Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
}

Vec electrical_power(const Vec& delta, const GridOperators& ops)
{
    if (ops.E.cols() == 0) return Vec::Zero(delta.size());
    const Vec diff = ops.E.transpose() * delta;
    return ops.E * (ops.B.array() * diff.array().sin()).matrix();
}

Vec electrical_power(const Vec& delta, const GridModel& model)
{
    return electrical_power(delta, GridOperators(model));
}

Mat power_jacobian(const Vec& delta, const GridOperators& ops)
{
    if (ops.E.cols() == 0) return Mat::Zero(delta.size(), delta.size());
    const Vec diff = ops.E.transpose() * delta;
    const Vec w = ops.B.array() * diff.array().cos();
    return ops.E * w.asDiagonal() * ops.E.transpose();
}

Vec integral_rate(const Vec& omega, const Vec& s, double k, const GridModel& model, const GridOperators& ops)
{
    const Vec cks = k * model.cost.cwiseProduct(s);
    return -omega.cwiseQuotient(model.cost) - ops.L * cks;
}

Vec integral_step(const GridState& state, const GridModel& model, double k, double dt)
{
    const GridOperators ops(model);
    return state.s + dt * integral_rate(state.omega, state.s, k, model, ops);
}

GridState step(const GridState& x, const Vec& u, const Vec& dd, int mode, double dt, const GridModel& model,
               const GridOperators& ops, double k)
{
    const Vec& m = model.inertia_of(mode);
    GridState next;
    next.delta = x.delta + dt * (ops.P * x.omega);
    const Vec accel = model.injection - model.damping.cwiseProduct(x.omega) + u - electrical_power(x.delta, ops) + dd;
    next.omega = x.omega + dt * accel.cwiseQuotient(m);
    next.s = k > 0.0 ? Vec(x.s + dt * integral_rate(x.omega, x.s, k, model, ops)) : x.s;
    return next;
}

GridState step(const GridState& state, const Vec& u, const Vec& dd, int mode, double dt, const GridModel& model,
               double k)
{
    return step(state, u, dd, mode, dt, model, GridOperators(model), k);
}

namespace {

struct Rate {
    Vec d, w, s;
};

Rate closed_loop_rate(const GridState& x, const Controller& ctrl, const Vec& dd, const Vec& m, const GridModel& model,
                      const GridOperators& ops)
{
    const Vec u = ctrl.action(x.omega, x.s, model);
    Rate r;
    r.d = ops.P * x.omega;
    r.w = (model.injection - model.damping.cwiseProduct(x.omega) + u - electrical_power(x.delta, ops) + dd)
              .cwiseQuotient(m);
    r.s = ctrl.has_integral() ? integral_rate(x.omega, x.s, ctrl.integral_gain(), model, ops)
                              : Vec(Vec::Zero(x.s.size()));
    return r;
}

GridState advance(const GridState& x, const Rate& r, double h)
{
    return {x.delta + h * r.d, x.omega + h * r.w, x.s + h * r.s};
}

}  // namespace

GridState closed_loop_step(const GridState& x, const Controller& ctrl, const Vec& dd, int mode, double dt,
                           const GridModel& model, const GridOperators& ops, Integrator integrator)
{
    if (integrator == Integrator::Euler) {
        const Vec u = ctrl.action(x.omega, x.s, model);
        return step(x, u, dd, mode, dt, model, ops, ctrl.has_integral() ? ctrl.integral_gain() : 0.0);
    }
    const Vec& m = model.inertia_of(mode);
    const Rate k1 = closed_loop_rate(x, ctrl, dd, m, model, ops);
    const Rate k2 = closed_loop_rate(advance(x, k1, dt / 2), ctrl, dd, m, model, ops);
    const Rate k3 = closed_loop_rate(advance(x, k2, dt / 2), ctrl, dd, m, model, ops);
    const Rate k4 = closed_loop_rate(advance(x, k3, dt), ctrl, dd, m, model, ops);
    return {x.delta + dt / 6 * (k1.d + 2 * k2.d + 2 * k3.d + k4.d),
            x.omega + dt / 6 * (k1.w + 2 * k2.w + 2 * k3.w + k4.w),
            x.s + dt / 6 * (k1.s + 2 * k2.s + 2 * k3.s + k4.s)};
}

long step_count(double horizon_s, double dt)
{
    return std::lround(horizon_s / dt);
}

Trajectory simulate(const GridModel& model, const InertiaSchedule& schedule, const DisturbanceProfile& disturbances,
                    PolicySource& policy, const GridState& initial, const SimulationOptions& options)
{
    const GridOperators ops(model);
    const long steps = step_count(options.horizon_s, options.dt);
    Trajectory traj;
    traj.dt = options.dt;
    traj.states.reserve(static_cast<std::size_t>(steps));
    traj.actions.reserve(static_cast<std::size_t>(steps));
    GridState x = initial;
    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * options.dt;
        if (!x.finite()) throw IntegrationError(k, t, "non-finite state");
        const int mode = schedule.mode_at(t);
        const Vec dd = disturbances.value_at(t, model.n);
        const int id = policy.select(k, t, x, mode);
        const Controller& ctrl = policy.controller(id);
        const Vec u = ctrl.action(x.omega, x.s, model);
        if (!u.allFinite()) throw IntegrationError(k, t, "non-finite action");
        policy.observe(k, x, u);
        traj.states.push_back(x);
        traj.actions.push_back(u);
        traj.modes.push_back(mode);
        traj.disturbances.push_back(dd);
        traj.controller_ids.push_back(id);
        if (options.integrator == Integrator::Euler)
            x = step(x, u, dd, mode, options.dt, model, ops, ctrl.has_integral() ? ctrl.integral_gain() : 0.0);
        else
            x = closed_loop_step(x, ctrl, dd, mode, options.dt, model, ops, Integrator::RK4);
    }
    if (!x.finite()) throw IntegrationError(steps, static_cast<double>(steps) * options.dt, "non-finite state");
    traj.final_state = x;
    return traj;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out)
{
    const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().delta.size());
    out << "t,mode,controller_id";
    for (const char* prefix : {"delta_", "omega_", "s_", "u_", "dd_"})
        for (int i = 0; i < n; ++i) out << ',' << prefix << i;
    out << '\n';
    auto put = [&out](const Vec& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_double(v[i]);
    };
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << format_double(traj.time(k)) << ',' << traj.modes[k] << ',' << traj.controller_ids[k];
        put(traj.states[k].delta);
        put(traj.states[k].omega);
        put(traj.states[k].s);
        put(traj.actions[k]);
        put(traj.disturbances[k]);
        out << '\n';
    }
}

void save_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_trajectory_csv(traj, out);
}

Trajectory read_trajectory_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("trajectory file: empty");
    int columns = 0;
    for (char c : line) columns += c == ',';
    ++columns;
    if ((columns - 3) % 5 != 0 || columns < 8) throw std::runtime_error("trajectory file: unexpected header");
    const int n = (columns - 3) / 5;
    Trajectory traj;
    std::vector<double> t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) v.push_back(parse_double(cell));
        if (static_cast<int>(v.size()) != columns) throw std::runtime_error("trajectory file: ragged row");
        auto slice = [&](int block) { return Vec(Eigen::Map<const Vec>(v.data() + 3 + block * n, n)); };
        t.push_back(v[0]);
        traj.modes.push_back(static_cast<int>(v[1]));
        traj.controller_ids.push_back(static_cast<int>(v[2]));
        traj.states.push_back({slice(0), slice(1), slice(2)});
        traj.actions.push_back(slice(3));
        traj.disturbances.push_back(slice(4));
    }
    if (traj.states.empty()) throw std::runtime_error("trajectory file: no rows");
    traj.dt = t.size() > 1 ? t[1] - t[0] : 0.01;
    traj.final_state = traj.states.back();
    return traj;
}

Trajectory load_trajectory_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return read_trajectory_csv(in);
}

}  // namespace gridswitch
