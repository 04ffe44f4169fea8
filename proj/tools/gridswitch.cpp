// Command line front end: training, simulation and the evaluation protocols.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gridswitch/harness.hpp"
#include "gridswitch/scenario.hpp"
#include "gridswitch/stability.hpp"

using namespace gridswitch;
namespace fs = std::filesystem;

namespace {

// Cases larger than this run only with --full.
constexpr int kDeskBuses = 9;

struct Common {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    bool full = false;
    int workers = 1;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--scenario", c.scenario, "scenario file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--out-dir", c.out_dir, "output directory");
    cmd->add_flag("--full", c.full, "allow full-scale cases");
    cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
}

Scenario load(const Common& c)
{
    Scenario sc = load_scenario(c.scenario);
    if (sc.grid.n > kDeskBuses && !c.full)
        throw std::runtime_error("scenario '" + sc.grid.name + "' has " + std::to_string(sc.grid.n) +
                                 " buses; pass --full to run full-scale cases");
    sc.training.workers = c.workers;
    return sc;
}

std::vector<Controller> load_pool(const std::vector<std::string>& files)
{
    std::vector<Controller> pool;
    for (const auto& f : files) pool.push_back(load_controller(f));
    return pool;
}

// Spec copy: the command line and the scenario, enough to rerun the experiment.
void write_spec(const fs::path& dir, const std::string& command, const Scenario& sc,
                const std::vector<std::string>& pool)
{
    std::ostringstream out;
    out << "# command\n" << command << '\n';
    for (const auto& f : pool) out << "# controller " << f << '\n';
    out << scenario_to_string(sc);
    write_file(dir / "spec.cfg", out.str());
}

std::string join_args(int argc, char** argv)
{
    std::string s;
    for (int i = 1; i < argc; ++i) s += (i > 1 ? " " : "") + std::string(argv[i]);
    return s;
}

std::string to_text(const std::function<void(std::ostream&)>& fn)
{
    std::ostringstream out;
    fn(out);
    return out.str();
}

int parse_mode(const std::string& text, const GridModel& model, bool& all)
{
    all = text == "all";
    if (all) return 0;
    const int q = parse_int(text);
    if (q < 0 || q >= model.mode_count()) throw std::runtime_error("mode index out of range: " + text);
    return q;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Frequency control under switching inertia"};
    app.require_subcommand(1);
    const std::string command = join_args(argc, argv);

    Common c;
    std::string mode_arg = "0", out_file, kind_name = "neural_pi", policy_name = "fixed";
    std::vector<std::string> pool_files, baseline_files;
    int trajectories = 100, index = 0, samples = 2000;
    std::vector<double> xis;
    std::vector<int> taus;
    int episodes = -1;

    auto* train_cmd = app.add_subcommand("train", "train one controller");
    add_common(train_cmd, c);
    train_cmd->add_option("--mode", mode_arg, "mode index or 'all'");
    train_cmd->add_option("--out", out_file, "controller file")->required();
    train_cmd->add_option("--kind", kind_name, "neural_pi, linear_droop, linear_pi, lyapunov_nn or nn_pi");
    train_cmd->add_option("--episodes", episodes, "override the scenario episode count");

    auto* sim_cmd = app.add_subcommand("simulate", "simulate one trajectory");
    add_common(sim_cmd, c);
    sim_cmd->add_option("--pool", pool_files, "controller files")->required();
    sim_cmd->add_option("--policy", policy_name, "fixed, known or online");
    sim_cmd->add_option("--index", index, "pool index for the fixed policy");

    auto* eval_cmd = app.add_subcommand("switch-eval", "switching protocol over many trajectories");
    add_common(eval_cmd, c);
    eval_cmd->add_option("--pool", pool_files, "base controller files, one per mode")->required();
    eval_cmd->add_option("--baselines", baseline_files, "extra fixed controllers");
    eval_cmd->add_option("--trajectories", trajectories, "trajectory count");

    auto* cross_cmd = app.add_subcommand("cross-mode", "every controller under every constant mode");
    add_common(cross_cmd, c);
    cross_cmd->add_option("--pool", pool_files, "controller files")->required();
    cross_cmd->add_option("--trajectories", trajectories, "trajectories per cell");

    auto* cert_cmd = app.add_subcommand("certify", "sampled stability certificate");
    add_common(cert_cmd, c);
    cert_cmd->add_option("--controller", out_file, "controller file")->required();
    cert_cmd->add_option("--mode", mode_arg, "mode index or 'all'");
    cert_cmd->add_option("--samples", samples, "domain samples");

    auto* verify_cmd = app.add_subcommand("verify", "check the envelope on switching trajectories");
    add_common(verify_cmd, c);
    verify_cmd->add_option("--pool", pool_files, "base controller files, one per mode")->required();
    verify_cmd->add_option("--trajectories", trajectories, "trajectory count");
    verify_cmd->add_option("--samples", samples, "certificate samples");

    auto* sweep_cmd = app.add_subcommand("sweep", "online switching over a hyperparameter grid");
    add_common(sweep_cmd, c);
    sweep_cmd->add_option("--pool", pool_files, "base controller files")->required();
    sweep_cmd->add_option("--xi", xis, "learning rates")->required();
    sweep_cmd->add_option("--tau", taus, "batch lengths")->required();
    sweep_cmd->add_option("--trajectories", trajectories, "trajectories per point");

    CLI11_PARSE(app, argc, argv);

    try {
        const Scenario sc = load(c);
        const fs::path dir = c.out_dir;
        const GridModel& g = sc.grid;

        if (*train_cmd) {
            bool all = false;
            const int q = parse_mode(mode_arg, g, all);
            TrainConfig tc = sc.training;
            tc.seed = c.seed;
            if (episodes >= 0) tc.episodes = episodes;
            const ControllerKind kind = controller_kind_from_string(kind_name);
            tc.learn_integral_gain = kind != ControllerKind::NeuralPI;
            const TrainReport rep = train(initial_controller(kind, sc, c.seed), g, {q, all}, tc,
                                          sc.disturbance_settings.magnitude);
            save_controller(rep.controller, out_file);
            write_spec(dir, command, sc, {});
            write_file(dir / "train_loss.csv", to_text([&](std::ostream& o) {
                           o << "episode,learning_rate,loss\n";
                           for (std::size_t e = 0; e < rep.episode_loss.size(); ++e)
                               o << e << ',' << format_double(rep.learning_rate[e]) << ','
                                 << format_double(rep.episode_loss[e]) << '\n';
                       }));
            std::cout << "mode " << rep.mode_label << " lambda " << format_double(rep.lambda) << " loss "
                      << format_double(rep.episode_loss.front()) << " -> " << format_double(rep.episode_loss.back())
                      << " gradient check " << format_double(rep.gradient_check.max_relative_error) << " hash "
                      << rep.hash() << '\n';
            if (rep.aborted) {
                std::cerr << "training aborted: " << rep.abort_reason << '\n';
                return 2;
            }
            return rep.gradient_check.passed ? 0 : 2;
        }

        if (*sim_cmd) {
            const auto pool = load_pool(pool_files);
            validate_pool(pool);
            InertiaSchedule schedule = sc.schedule;
            DisturbanceProfile dist = sc.disturbances;
            // Without explicit events the protocol draws them from the seed.
            if (schedule.switch_times.empty())
                schedule = sample_inertia_schedule(c.seed, sc.schedule_settings.horizon_s, sc.schedule_settings.dwell_s,
                                                   resolve_chain(sc.schedule_settings, g.mode_count()),
                                                   sc.schedule_settings.randomized_dwell);
            if (dist.events.empty()) dist = sample_event_profile(g, sc.disturbance_settings, c.seed, 0);
            const SimulationOptions opts{sc.schedule_settings.horizon_s, sc.training.dt, Integrator::Euler};
            Trajectory traj;
            std::vector<SwitchLogRow> log;
            if (policy_name == "fixed") {
                FixedPolicy policy(pool.at(static_cast<std::size_t>(index)), index);
                traj = simulate(g, schedule, dist, policy, start_state(g, pool[static_cast<std::size_t>(index)]), opts);
            } else if (policy_name == "known") {
                KnownSwitchingPolicy policy(pool, match_pool_to_modes(pool, g));
                traj = simulate(g, schedule, dist, policy, start_state(g, pool.front()), opts);
            } else if (policy_name == "online") {
                OnlineSwitchingPolicy policy(pool, g, sc.switching, sc.training.lambda, c.seed);
                policy.switcher().set_dt(opts.dt);
                policy.switcher().set_logging(true);
                traj = simulate(g, schedule, dist, policy, start_state(g, pool.front()), opts);
                log = policy.switcher().log();
            } else {
                throw std::runtime_error("unknown policy " + policy_name);
            }
            write_spec(dir, command, sc, pool_files);
            save_trajectory_csv(traj, dir / "trajectory.csv");
            if (!log.empty()) write_file(dir / "switch_log.csv", to_text([&](std::ostream& o) { write_switch_log(log, o); }));
            return 0;
        }

        if (*eval_cmd) {
            const auto pool = load_pool(pool_files);
            const auto baselines = load_pool(baseline_files);
            SwitchingSpec spec = switching_spec(sc, trajectories, c.seed);
            spec.workers = c.workers;
            const SwitchingResult res = eval_switching(pool, baselines, g, spec);
            auto files = pool_files;
            files.insert(files.end(), baseline_files.begin(), baseline_files.end());
            write_spec(dir, command, sc, files);
            const std::string table = to_text([&](std::ostream& o) { write_metrics_table(res, o); });
            write_file(dir / "metrics.csv", table);
            write_file(dir / "per_trajectory.csv", to_text([&](std::ostream& o) { write_per_trajectory(res, o); }));
            write_file(dir / "switch_log.csv", to_text([&](std::ostream& o) { write_switch_log(res.switch_log, o); }));
            std::cout << table;
            for (const auto& m : res.metrics)
                for (std::size_t j = 0; j < m.total_cost.size(); ++j)
                    if (std::abs(m.total_cost[j] - m.freq_deviation[j] - m.control_cost[j]) > 1e-12) return 3;
            return 0;
        }

        if (*cross_cmd) {
            const auto pool = load_pool(pool_files);
            CrossModeOptions opts;
            opts.trajectories = trajectories;
            opts.seed = c.seed;
            opts.lambda = sc.training.lambda;
            opts.magnitude = sc.disturbance_settings.magnitude;
            opts.window_s = sc.disturbance_settings.window_s;
            opts.dt = sc.training.dt;
            opts.workers = c.workers;
            const Mat costs = eval_cross_mode(pool, g, opts);
            write_spec(dir, command, sc, pool_files);
            const std::string table = to_text([&](std::ostream& o) { write_cross_mode(costs, g, o); });
            write_file(dir / "cross_mode.csv", table);
            std::cout << table;
            return 0;
        }

        if (*cert_cmd) {
            const Controller ctrl = load_controller(out_file);
            bool all = false;
            const int q = parse_mode(mode_arg, g, all);
            CertificateOptions opts;
            opts.samples = samples;
            opts.seed = c.seed;
            write_spec(dir, command, sc, {out_file});
            bool ok = true;
            for (int mode = all ? 0 : q; mode < (all ? g.mode_count() : q + 1); ++mode) {
                const IssCertificate cert = compute_certificate(g, mode, ctrl, opts);
                const std::string text = certificate_to_text(cert);
                write_file(dir / ("certificate_mode_" + std::to_string(mode) + ".txt"), text);
                std::cout << text << '\n';
                ok = ok && cert.certified;
            }
            return ok ? 0 : 3;
        }

        if (*verify_cmd) {
            const auto pool = load_pool(pool_files);
            const auto map = match_pool_to_modes(pool, g);
            CertificateOptions copts;
            copts.samples = samples;
            copts.seed = c.seed;
            std::vector<IssCertificate> certs;
            for (int q = 0; q < g.mode_count(); ++q)
                certs.push_back(compute_certificate(g, q, pool[static_cast<std::size_t>(map[static_cast<std::size_t>(q)])], copts));
            const Equilibrium eq = solve_equilibrium(g, pool.front().integral_gain());
            const InertiaChain chain = resolve_chain(sc.schedule_settings, g.mode_count());
            const SimulationOptions opts{sc.schedule_settings.horizon_s, sc.training.dt, Integrator::Euler};
            std::ostringstream report;
            report << "trajectory,passed,max_ratio,controller_switches,max_switch_jump,descent_checks,max_descent_excess,"
                      "violations\n";
            int failures = 0;
            for (int j = 0; j < trajectories; ++j) {
                const auto schedule = sample_inertia_schedule(derive_seed(c.seed, 0x76657269ULL, static_cast<std::uint64_t>(j)),
                                                              opts.horizon_s, sc.schedule_settings.dwell_s, chain,
                                                              sc.schedule_settings.randomized_dwell);
                const auto dist = sample_event_profile(g, sc.disturbance_settings, c.seed, j);
                KnownSwitchingPolicy policy(pool, map);
                const Trajectory traj = simulate(g, schedule, dist, policy, eq.state(), opts);
                const EnvelopeReport rep = verify_envelope(traj, eq, certs, sc.schedule_settings.dwell_s, g, &pool);
                failures += rep.passed() ? 0 : 1;
                report << j << ',' << (rep.passed() ? 1 : 0) << ',' << format_double(rep.max_ratio) << ','
                       << rep.controller_switches << ',' << format_double(rep.max_switch_jump) << ','
                       << rep.descent_checks << ',' << format_double(rep.max_descent_excess) << ','
                       << rep.violations.size() << '\n';
            }
            const SwitchedEnvelope env = switched_envelope(certs, sc.schedule_settings.dwell_s);
            write_spec(dir, command, sc, pool_files);
            write_file(dir / "envelope.csv", report.str());
            std::ostringstream summary;
            summary << "kappa " << format_double(env.kappa) << "\nrho " << format_double(env.rho) << "\nbeta "
                    << format_double(env.beta) << "\nmu " << format_double(env.mu) << "\ntau_a "
                    << format_double(env.tau_a) << "\ntau_a_star " << format_double(env.tau_a_star)
                    << "\ndwell_condition " << (env.dwell_condition ? 1 : 0) << "\nfailures " << failures << '\n';
            write_file(dir / "envelope_summary.txt", summary.str());
            std::cout << summary.str();
            return failures == 0 ? 0 : 3;
        }

        if (*sweep_cmd) {
            const auto pool = load_pool(pool_files);
            SwitchingSpec spec = switching_spec(sc, trajectories, c.seed);
            spec.workers = c.workers;
            const auto rows = sweep_hyperparams(pool, g, spec, xis, taus);
            write_spec(dir, command, sc, pool_files);
            const std::string table = to_text([&](std::ostream& o) { write_sweep(rows, o); });
            write_file(dir / "sweep.csv", table);
            std::cout << table;
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
