#include "gridswitch/switching.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "gridswitch/training.hpp"

namespace gridswitch {

bool event_trigger(const Vec& omega, double trigger_hz, double base_hz)
{
    if (omega.size() == 0) return false;
    return omega.cwiseAbs().maxCoeff() * base_hz > trigger_hz;
}

double batch_cost(const Trajectory& traj, const GridModel& model, double lambda, std::size_t begin, std::size_t end)
{
    if (begin >= end || end > traj.size()) throw std::invalid_argument("batch_cost: empty or out-of-range slice");
    return window_cost(traj, model, lambda, begin, end);
}

std::string to_string(Phase phase)
{
    switch (phase) {
    case Phase::Deployment: return "deployment";
    case Phase::Selection: return "selection";
    case Phase::Trial: return "trial";
    }
    return "unknown";
}

SwitcherState SwitcherState::fresh(int m, int initial)
{
    if (m < 1) throw std::invalid_argument("switcher needs at least one controller");
    SwitcherState s;
    s.P.assign(static_cast<std::size_t>(m), 1.0 / m);
    s.G.assign(static_cast<std::size_t>(m), 0.0);
    s.committed = initial;
    return s;
}

void bandit_update(SwitcherState& state, int arm, double g, double xi)
{
    const auto a = static_cast<std::size_t>(arm);
    if (arm < 0 || a >= state.P.size()) throw std::out_of_range("bandit_update: arm out of range");
    if (!(state.P[a] > 0.0)) throw std::logic_error("bandit_update: selection probability must be positive");
    state.G[a] += g / state.P[a];
    const double gmin = *std::min_element(state.G.begin(), state.G.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < state.P.size(); ++i) {
        state.P[i] = std::exp(-xi * (state.G[i] - gmin));
        sum += state.P[i];
    }
    for (auto& p : state.P) p /= sum;
}

int argmax_probability(const std::vector<double>& P)
{
    return static_cast<int>(std::max_element(P.begin(), P.end()) - P.begin());
}

int sample_arm(const std::vector<double>& P, Rng& rng)
{
    const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        acc += P[i];
        if (r < acc) return static_cast<int>(i);
    }
    // Rounding left r above the total mass: take the last arm with mass.
    for (std::size_t i = P.size(); i-- > 0;)
        if (P[i] > 0.0) return static_cast<int>(i);
    return 0;
}

void write_switch_log(const std::vector<SwitchLogRow>& log, std::ostream& out)
{
    const std::size_t m = log.empty() ? 0 : log.front().P.size();
    out << "t,phase,batch,arm,g";
    for (std::size_t i = 0; i < m; ++i) out << ",P_" << i;
    out << '\n';
    for (const auto& r : log) {
        out << format_double(r.t) << ',' << to_string(r.phase) << ',' << r.batch << ',' << r.arm << ',';
        if (r.updated) out << format_double(r.g);
        for (double p : r.P) out << ',' << format_double(p);
        out << '\n';
    }
}

OnlineSwitcher::OnlineSwitcher(int m, const SwitchConfig& config, double base_hz, std::uint64_t seed, int initial)
    : config_(config), base_hz_(base_hz), rng_(derive_seed(seed, 0x62616e64ULL)), state_(SwitcherState::fresh(m, initial))
{
    config_.validate();
}

void OnlineSwitcher::start_batch(long step)
{
    state_.batch_start = step;
    state_.batch_end = std::min(step + config_.batch_steps, state_.phase_start + config_.selection_steps);
    state_.arm = sample_arm(state_.P, rng_);
    state_.batch_sum = 0.0;
    state_.batch_rows = 0;
}

int OnlineSwitcher::begin_step(long step, const Vec& omega)
{
    if (state_.phase == Phase::Deployment && !state_.selection_flag &&
        event_trigger(omega, config_.trigger_hz, base_hz_)) {
        state_.selection_flag = true;
        state_.phase = Phase::Selection;
        state_.phase_start = step;
        state_.batch = 0;
        if (config_.reset_bandit) {
            const auto m = static_cast<int>(state_.P.size());
            state_.P.assign(static_cast<std::size_t>(m), 1.0 / m);
            std::fill(state_.G.begin(), state_.G.end(), 0.0);
        }
        start_batch(step);
    }
    return state_.phase == Phase::Selection ? state_.arm : state_.committed;
}

void OnlineSwitcher::end_step(long step, double stage_cost)
{
    SwitchLogRow row;
    row.step = step;
    row.t = static_cast<double>(step) * dt_;
    row.phase = state_.phase;
    switch (state_.phase) {
    case Phase::Deployment:
        row.arm = state_.committed;
        break;
    case Phase::Selection:
        row.batch = state_.batch;
        row.arm = state_.arm;
        state_.batch_sum += stage_cost;
        ++state_.batch_rows;
        if (step + 1 >= state_.batch_end) {
            const double g = state_.batch_sum / state_.batch_rows;
            bandit_update(state_, state_.arm, g, config_.learning_rate);
            row.updated = true;
            row.g = g;
            if (state_.batch_end >= state_.phase_start + config_.selection_steps) {
                state_.phase = Phase::Trial;
                state_.committed = argmax_probability(state_.P);
                state_.trial_left = config_.trial_steps;
            } else {
                ++state_.batch;
                start_batch(step + 1);
            }
        }
        break;
    case Phase::Trial:
        row.arm = state_.committed;
        if (--state_.trial_left <= 0) {
            state_.selection_flag = false;
            state_.phase = Phase::Deployment;
        }
        break;
    }
    if (logging_) {
        row.P = state_.P;
        log_.push_back(std::move(row));
    }
}

OnlineSwitchingPolicy::OnlineSwitchingPolicy(const std::vector<Controller>& pool, const GridModel& model,
                                             const SwitchConfig& config, double lambda, std::uint64_t seed, int initial)
    : pool_(pool), model_(model), lambda_(lambda),
      switcher_(static_cast<int>(pool.size()), config, model.base_hz, seed, initial)
{
    validate_pool(pool);
}

int OnlineSwitchingPolicy::select(long step, double, const GridState& state, int)
{
    return switcher_.begin_step(step, state.omega);
}

void OnlineSwitchingPolicy::observe(long step, const GridState& state, const Vec& u)
{
    switcher_.end_step(step, stage_cost(u, state.omega, model_.cost, lambda_));
}

KnownSwitchingPolicy::KnownSwitchingPolicy(const std::vector<Controller>& pool, std::vector<int> mode_to_controller)
    : pool_(pool), map_(std::move(mode_to_controller))
{
    for (int id : map_)
        if (id < 0 || static_cast<std::size_t>(id) >= pool.size())
            throw std::invalid_argument("known switching: controller index out of range");
}

int KnownSwitchingPolicy::select(long, double, const GridState&, int mode)
{
    return map_.at(static_cast<std::size_t>(mode));
}

std::vector<int> match_pool_to_modes(const std::vector<Controller>& pool, const GridModel& model)
{
    if (pool.size() != model.mode_labels.size())
        throw std::invalid_argument("known switching needs one controller per inertia mode");
    std::vector<int> map;
    for (double label : model.mode_labels) {
        const std::string want = format_double(label);
        int found = -1;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (pool[i].trained_mode() == want) found = static_cast<int>(i);
        if (found < 0) throw std::invalid_argument("no controller in the pool was trained for mode " + want);
        map.push_back(found);
    }
    return map;
}

}  // namespace gridswitch
