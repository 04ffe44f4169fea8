#include "gridswitch/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "gridswitch/stability.hpp"
#include "gridswitch/training.hpp"

namespace gridswitch {

Summary summarize(const std::vector<double>& values)
{
    Summary s;
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / n;
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / n);
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const auto mid = sorted.size() / 2;
    s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    // Nearest-rank percentile.
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * n));
    s.p90 = sorted[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

WindowCost transient_cost(const Trajectory& traj, const GridModel& model, double lambda,
                          const std::vector<double>& event_times, double window_s)
{
    WindowCost out;
    int windows = 0;
    for (double te : event_times) {
        const auto begin = static_cast<std::size_t>(std::lround(te / traj.dt));
        const auto end = std::min(traj.size(), begin + static_cast<std::size_t>(std::lround(window_s / traj.dt)));
        if (begin >= end) continue;
        double f = 0.0, c = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            f += frequency_cost(traj.states[k].omega, lambda);
            c += control_cost(traj.actions[k], model.cost);
        }
        const double rows = static_cast<double>(end - begin);
        out.freq += f / rows;
        out.control += c / rows;
        ++windows;
    }
    if (windows > 0) {
        out.freq /= windows;
        out.control /= windows;
    }
    return out;
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn)
{
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    for (int w = 0; w < workers; ++w)
        threads.emplace_back([&] {
            for (int i = next++; i < count && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                }
            }
        });
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

GridState start_state(const GridModel& model, const Controller& ctrl)
{
    const Equilibrium eq = solve_equilibrium(model, ctrl.has_integral() ? ctrl.integral_gain() : 1.0);
    GridState x = eq.state();
    if (!ctrl.has_integral()) x.s.setZero();
    return x;
}

Mat eval_cross_mode(const std::vector<Controller>& pool, const GridModel& model, const CrossModeOptions& options)
{
    const int m = model.mode_count();
    const int p = static_cast<int>(pool.size());
    std::vector<std::vector<double>> cells(static_cast<std::size_t>(p * m));
    parallel_for(p * m, options.workers, [&](int cell) {
        const int i = cell / m, q = cell % m;
        const Controller& ctrl = pool[static_cast<std::size_t>(i)];
        FixedPolicy policy(ctrl);
        const GridState x0 = start_state(model, ctrl);
        SimulationOptions sim{options.window_s, options.dt, Integrator::Euler};
        auto& out = cells[static_cast<std::size_t>(cell)];
        for (int j = 0; j < options.trajectories; ++j) {
            // Common random numbers: the draw depends on (seed, j) only.
            Rng rng(derive_seed(options.seed, 0x63726f73ULL, static_cast<std::uint64_t>(j)));
            DisturbanceProfile dist;
            dist.events.push_back({0.0, sample_disturbance_step(rng, model.n, options.magnitude)});
            const Trajectory traj = simulate(model, InertiaSchedule::constant(q), dist, policy, x0, sim);
            out.push_back(transient_cost(traj, model, options.lambda, {0.0}, options.window_s).total());
        }
    });
    Mat costs(p, m);
    for (int i = 0; i < p; ++i)
        for (int q = 0; q < m; ++q) costs(i, q) = summarize(cells[static_cast<std::size_t>(i * m + q)]).mean;
    return costs;
}

DisturbanceProfile sample_event_profile(const GridModel& model, const DisturbanceSettings& settings,
                                        std::uint64_t seed, int index)
{
    Rng rng(derive_seed(seed, 0x64697374ULL, static_cast<std::uint64_t>(index)));
    DisturbanceProfile p;
    for (double t : settings.event_times) p.events.push_back({t, sample_disturbance_step(rng, model.n, settings.magnitude)});
    return p;
}

const EvalMetrics& SwitchingResult::of(const std::string& name) const
{
    for (std::size_t i = 0; i < methods.size(); ++i)
        if (methods[i].name == name) return metrics[i];
    throw std::out_of_range("no method named " + name);
}

SwitchingResult eval_switching(const std::vector<Controller>& pool, const std::vector<Controller>& baselines,
                               const GridModel& model, const SwitchingSpec& spec)
{
    validate_pool(pool);
    spec.switching.validate();
    SwitchingResult res;
    std::vector<int> known_map;
    if (spec.include_known) {
        known_map = match_pool_to_modes(pool, model);
        res.methods.push_back({"known_switching", MethodKind::Known, 0, false});
    }
    if (spec.include_online) res.methods.push_back({"online_switching", MethodKind::Online, 0, false});
    if (spec.include_fixed)
        for (std::size_t i = 0; i < pool.size(); ++i)
            res.methods.push_back({"neural_pi_" + pool[i].trained_mode(), MethodKind::Fixed, static_cast<int>(i), false});
    for (std::size_t i = 0; i < baselines.size(); ++i)
        res.methods.push_back({to_string(baselines[i].kind()), MethodKind::Fixed, static_cast<int>(i), true});

    const InertiaChain chain = resolve_chain(spec.schedule, model.mode_count());
    const int nt = spec.trajectories;
    const auto nm = res.methods.size();
    res.schedules.resize(static_cast<std::size_t>(nt));
    for (int j = 0; j < nt; ++j)
        res.schedules[static_cast<std::size_t>(j)] =
            sample_inertia_schedule(derive_seed(spec.seed, 0x73636865ULL, static_cast<std::uint64_t>(j)),
                                    spec.horizon_s, spec.schedule.dwell_s, chain, spec.schedule.randomized_dwell);

    std::vector<WindowCost> costs(nm * static_cast<std::size_t>(nt));
    res.kept.resize(spec.keep_trajectory >= 0 && spec.keep_trajectory < nt ? nm : 0);
    const SimulationOptions sim{spec.horizon_s, spec.dt, Integrator::Euler};
    parallel_for(nt, spec.workers, [&](int j) {
        const auto& schedule = res.schedules[static_cast<std::size_t>(j)];
        const DisturbanceProfile dist = sample_event_profile(model, spec.disturbances, spec.seed, j);
        for (std::size_t mi = 0; mi < nm; ++mi) {
            const Method& method = res.methods[mi];
            Trajectory traj;
            if (method.kind == MethodKind::Known) {
                KnownSwitchingPolicy policy(pool, known_map);
                traj = simulate(model, schedule, dist, policy, start_state(model, pool.front()), sim);
            } else if (method.kind == MethodKind::Online) {
                // The bandit stream is separate from scenario randomness.
                OnlineSwitchingPolicy policy(pool, model, spec.switching, spec.lambda,
                                             derive_seed(spec.seed, 0x6f6e6c69ULL, static_cast<std::uint64_t>(j)));
                policy.switcher().set_dt(spec.dt);
                policy.switcher().set_logging(j == spec.keep_trajectory);
                traj = simulate(model, schedule, dist, policy, start_state(model, pool.front()), sim);
                if (j == spec.keep_trajectory) res.switch_log = policy.switcher().log();
            } else {
                const Controller& ctrl = method.baseline ? baselines[static_cast<std::size_t>(method.index)]
                                                         : pool[static_cast<std::size_t>(method.index)];
                FixedPolicy policy(ctrl, method.index);
                traj = simulate(model, schedule, dist, policy, start_state(model, ctrl), sim);
            }
            costs[mi * static_cast<std::size_t>(nt) + static_cast<std::size_t>(j)] =
                transient_cost(traj, model, spec.lambda, spec.disturbances.event_times, spec.disturbances.window_s);
            if (j == spec.keep_trajectory) res.kept[mi] = std::move(traj);
        }
    });
    res.metrics.resize(nm);
    for (std::size_t mi = 0; mi < nm; ++mi)
        for (int j = 0; j < nt; ++j) {
            const WindowCost& w = costs[mi * static_cast<std::size_t>(nt) + static_cast<std::size_t>(j)];
            res.metrics[mi].freq_deviation.push_back(w.freq);
            res.metrics[mi].control_cost.push_back(w.control);
            res.metrics[mi].total_cost.push_back(w.freq + w.control);
        }
    return res;
}

std::vector<SweepPoint> sweep_hyperparams(const std::vector<Controller>& pool, const GridModel& model,
                                          const SwitchingSpec& spec, std::vector<double> xis, std::vector<int> taus)
{
    std::set<std::pair<double, int>> grid;
    for (double xi : xis)
        for (int tau : taus) grid.emplace(xi, tau);
    std::vector<SweepPoint> rows;
    for (const auto& [xi, tau] : grid) {
        SwitchingSpec s = spec;
        s.switching.learning_rate = xi;
        s.switching.batch_steps = tau;
        s.switching.validate();
        s.include_known = false;
        s.include_fixed = false;
        s.include_online = true;
        s.keep_trajectory = -1;
        const SwitchingResult r = eval_switching(pool, {}, model, s);
        const EvalMetrics& m = r.of("online_switching");
        rows.push_back({xi, tau, m.freq(), m.control(), m.total()});
    }
    return rows;
}

Controller initial_controller(ControllerKind kind, const Scenario& scenario, std::uint64_t seed)
{
    const auto& tc = scenario.training;
    const int n = scenario.grid.n;
    Rng rng(derive_seed(seed, 0x696e6974ULL));
    switch (kind) {
    case ControllerKind::NeuralPI: return Controller::neural_pi(n, tc.hidden_units, tc.integral_gain, tc.shared_network);
    case ControllerKind::LinearDroop: return Controller::linear_droop(n);
    case ControllerKind::LinearPI: return Controller::linear_pi(n, 1.0, tc.integral_gain);
    case ControllerKind::LyapunovNN: return Controller::lyapunov_nn(n, tc.hidden_units, rng);
    case ControllerKind::NNPI: return Controller::nn_pi(n, tc.hidden_units, tc.integral_gain, rng);
    }
    throw std::invalid_argument("unknown controller kind");
}

std::vector<TrainReport> train_base_pool(const Scenario& scenario, int workers)
{
    const int m = scenario.grid.mode_count();
    std::vector<TrainReport> reports(static_cast<std::size_t>(m));
    parallel_for(m, workers, [&](int q) {
        TrainConfig tc = scenario.training;
        tc.seed = scenario.training.seed + static_cast<std::uint64_t>(q);
        const Controller init = initial_controller(ControllerKind::NeuralPI, scenario, tc.seed);
        reports[static_cast<std::size_t>(q)] =
            train(init, scenario.grid, {q, false}, tc, scenario.disturbance_settings.magnitude);
    });
    return reports;
}

TrainReport train_baseline(ControllerKind kind, const Scenario& scenario)
{
    TrainConfig tc = scenario.training;
    tc.learn_integral_gain = true;
    const Controller init = initial_controller(kind, scenario, tc.seed);
    return train(init, scenario.grid, {0, true}, tc, scenario.disturbance_settings.magnitude);
}

SwitchingSpec switching_spec(const Scenario& scenario, int trajectories, std::uint64_t seed)
{
    SwitchingSpec spec;
    spec.trajectories = trajectories;
    spec.seed = seed;
    spec.horizon_s = scenario.schedule_settings.horizon_s;
    spec.dt = scenario.training.dt;
    spec.lambda = scenario.training.lambda;
    spec.switching = scenario.switching;
    spec.schedule = scenario.schedule_settings;
    spec.disturbances = scenario.disturbance_settings;
    return spec;
}

namespace {

void put_summary(std::ostream& out, const Summary& s)
{
    out << ',' << format_double(s.mean) << ',' << format_double(s.std) << ',' << format_double(s.median) << ','
        << format_double(s.p90);
}

}  // namespace

void write_metrics_table(const SwitchingResult& result, std::ostream& out)
{
    out << "method,freq_mean,freq_std,freq_median,freq_p90,control_mean,control_std,control_median,control_p90,"
           "total_mean,total_std,total_median,total_p90\n";
    for (std::size_t i = 0; i < result.methods.size(); ++i) {
        out << result.methods[i].name;
        put_summary(out, result.metrics[i].freq());
        put_summary(out, result.metrics[i].control());
        put_summary(out, result.metrics[i].total());
        out << '\n';
    }
}

void write_per_trajectory(const SwitchingResult& result, std::ostream& out)
{
    out << "method,trajectory,freq_deviation,control_cost,total_cost\n";
    for (std::size_t i = 0; i < result.methods.size(); ++i) {
        const auto& m = result.metrics[i];
        for (std::size_t j = 0; j < m.total_cost.size(); ++j)
            out << result.methods[i].name << ',' << j << ',' << format_double(m.freq_deviation[j]) << ','
                << format_double(m.control_cost[j]) << ',' << format_double(m.total_cost[j]) << '\n';
    }
}

void write_cross_mode(const Mat& costs, const GridModel& model, std::ostream& out)
{
    out << "controller";
    for (double label : model.mode_labels) out << ",mode_" << format_double(label);
    out << '\n';
    for (Eigen::Index i = 0; i < costs.rows(); ++i) {
        out << "neural_pi_" << format_double(model.mode_labels[static_cast<std::size_t>(i) % model.mode_labels.size()]);
        for (Eigen::Index q = 0; q < costs.cols(); ++q) out << ',' << format_double(costs(i, q));
        out << '\n';
    }
}

void write_sweep(const std::vector<SweepPoint>& rows, std::ostream& out)
{
    out << "xi,tau,freq_mean,freq_std,control_mean,control_std,total_mean,total_std\n";
    for (const auto& r : rows)
        out << format_double(r.xi) << ',' << r.tau << ',' << format_double(r.freq.mean) << ','
            << format_double(r.freq.std) << ',' << format_double(r.control.mean) << ',' << format_double(r.control.std)
            << ',' << format_double(r.total.mean) << ',' << format_double(r.total.std) << '\n';
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace gridswitch
