#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "gridswitch/scenario.hpp"
#include "gridswitch/stability.hpp"
#include "gridswitch/training.hpp"
#include "synthetic_bandit.hpp"

using namespace gridswitch;
using fixtures::vec;

namespace {

// Feeds constant stage costs through a triggered switcher and returns the log.
std::vector<SwitchLogRow> run_selection(const SwitchConfig& cfg, long steps)
{
    OnlineSwitcher sw(3, cfg, 60.0, 1);
    const Vec disturbed = Vec::Constant(2, 1.0);
    const Vec calm = Vec::Zero(2);
    for (long k = 0; k < steps; ++k) {
        sw.begin_step(k, k == 0 ? disturbed : calm);
        sw.end_step(k, 1.0);
    }
    return sw.log();
}

}  // namespace

TEST_CASE("event trigger is strict")
{
    CHECK(event_trigger(vec({0.0, 0.02 / 60.0}), 0.01, 60.0));
    CHECK(event_trigger(vec({-0.02 / 60.0}), 0.01, 60.0));
    CHECK_FALSE(event_trigger(vec({0.01, -0.01}), 0.01, 1.0));
    CHECK_FALSE(event_trigger(Vec::Zero(3), 0.01, 60.0));
}

TEST_CASE("batch cost is the mean stage cost")
{
    const GridModel g = fixtures::two_bus();
    Trajectory traj;
    for (int k = 0; k < 4; ++k) {
        traj.states.push_back(GridState::zeros(2));
        traj.actions.push_back(vec({1.0, 0.0}));
    }
    CHECK(batch_cost(traj, g, 10.0, 0, 4) == doctest::Approx(0.5));
    CHECK(batch_cost(traj, g, 10.0, 1, 3) == doctest::Approx(0.5));
}

TEST_CASE("hand evaluated exponential-weights update")
{
    SwitcherState s = SwitcherState::fresh(3);
    bandit_update(s, 0, 10.0, 5e-3);
    CHECK(s.G[0] == doctest::Approx(30.0));
    CHECK(s.G[1] == 0.0);
    const double a = std::exp(-0.15);
    CHECK(std::abs(s.P[0] - a / (a + 2.0)) < 1e-12);
    CHECK(std::abs(s.P[0] - 0.3009) < 1e-4);
    CHECK(std::abs(s.P[1] - 1.0 / (a + 2.0)) < 1e-12);
    CHECK(std::abs(s.P[2] - 0.3496) < 1e-4);
}

TEST_CASE("zero cost leaves the distribution unchanged")
{
    SwitcherState s = SwitcherState::fresh(4);
    const auto before = s.P;
    bandit_update(s, 2, 0.0, 0.3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(s.P[i] == doctest::Approx(before[i]).epsilon(1e-15));
}

TEST_CASE("large accumulated costs do not overflow")
{
    SwitcherState s = SwitcherState::fresh(3);
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const int arm = sample_arm(s.P, rng);
        bandit_update(s, arm, arm == 2 ? 0.0 : 1e6, 1.0);
    }
    double sum = 0.0;
    for (double p : s.P) {
        CHECK(std::isfinite(p));
        sum += p;
    }
    CHECK(sum == doctest::Approx(1.0));
    CHECK(argmax_probability(s.P) == 2);
}

TEST_CASE("argmax breaks ties toward the lowest index")
{
    CHECK(argmax_probability({0.25, 0.5, 0.25}) == 1);
    CHECK(argmax_probability({0.4, 0.4, 0.2}) == 0);
}

TEST_CASE("sampled arms follow the distribution")
{
    Rng rng(3);
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 30000; ++i) ++counts[static_cast<std::size_t>(sample_arm({0.2, 0.5, 0.3}, rng))];
    CHECK(counts[0] / 30000.0 == doctest::Approx(0.2).epsilon(0.05));
    CHECK(counts[1] / 30000.0 == doctest::Approx(0.5).epsilon(0.05));
    CHECK(sample_arm({0.0, 0.0, 1.0}, rng) == 2);
}

TEST_CASE("equal costs keep the distribution near uniform")
{
    SwitchConfig cfg;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        OnlineSwitcher sw(3, cfg, 60.0, seed);
        const Vec w = Vec::Constant(1, 1.0);
        long k = 0;
        sw.begin_step(k, w);
        while (sw.state().phase == Phase::Selection) {
            sw.begin_step(k, w);
            sw.end_step(k++, 0.5);
        }
        for (double p : sw.state().P) CHECK(std::abs(p - 1.0 / 3.0) < 0.05);
    }
}

TEST_CASE("selection phase batching")
{
    SUBCASE("five full batches")
    {
        SwitchConfig cfg;
        cfg.batch_steps = 10;
        CHECK(cfg.batch_count() == 5);
        const auto log = run_selection(cfg, 60);
        int updates = 0;
        for (const auto& r : log) updates += r.updated;
        CHECK(updates == 5);
        CHECK(log[49].phase == Phase::Selection);
        CHECK(log[50].phase == Phase::Trial);
    }
    SUBCASE("last batch is truncated at the phase end")
    {
        SwitchConfig cfg;
        cfg.batch_steps = 15;
        CHECK(cfg.batch_count() == 4);
        const auto log = run_selection(cfg, 60);
        std::vector<int> rows(4, 0);
        for (const auto& r : log)
            if (r.phase == Phase::Selection) ++rows[static_cast<std::size_t>(r.batch)];
        CHECK(rows == std::vector<int>{15, 15, 15, 5});
    }
    SUBCASE("batch longer than the phase is rejected")
    {
        SwitchConfig cfg;
        cfg.batch_steps = 51;
        CHECK_THROWS(cfg.validate());
    }
}

TEST_CASE("trial and deployment phases")
{
    SwitchConfig cfg;
    cfg.trial_steps = 20;
    const auto log = run_selection(cfg, 100);
    CHECK(log[49].phase == Phase::Selection);
    for (long k = 50; k < 70; ++k) CHECK(log[static_cast<std::size_t>(k)].phase == Phase::Trial);
    CHECK(log[70].phase == Phase::Deployment);
    // The committed arm persists into deployment while the frequency stays calm.
    CHECK(log[99].arm == log[50].arm);
}

TEST_CASE("synthetic fixed-cost arms")
{
    // Expected success rate with literal EXP3 over ten batches is about 0.75.
    const int hits = fixtures::synthetic_successes({1.0, 2.0, 3.0}, SwitchConfig{}, 100);
    MESSAGE("cheapest arm selected in " << hits << " of 100 seeds");
    CHECK(hits >= 90);
}

TEST_CASE("a calm grid never switches")
{
    const Scenario sc = load_scenario(GRIDSWITCH_DATA_DIR "/three_bus.cfg");
    std::vector<Controller> pool(3, Controller::neural_pi(3, 20, 1.0));
    OnlineSwitchingPolicy policy(pool, sc.grid, sc.switching, 10.0, 4, 1);
    InertiaSchedule sched;
    sched.switch_times = {5.0};
    sched.modes = {0, 2};
    const auto traj = simulate(sc.grid, sched, {}, policy, solve_equilibrium(sc.grid, 1.0).state(), {10.0, 0.01});
    for (int id : traj.controller_ids) CHECK(id == 1);
    CHECK(policy.switcher().state().phase == Phase::Deployment);
}

TEST_CASE("online policy reacts to a disturbance")
{
    const Scenario sc = load_scenario(GRIDSWITCH_DATA_DIR "/three_bus.cfg");
    Rng rng(5);
    std::vector<Controller> pool;
    for (int i = 0; i < 3; ++i) pool.push_back(Controller::neural_pi_random(3, 20, 1.0, rng));
    OnlineSwitchingPolicy policy(pool, sc.grid, sc.switching, 10.0, 4);
    DisturbanceProfile d;
    d.events = {{0.1, vec({0.3, 0.0, 0.0})}};
    const auto traj = simulate(sc.grid, InertiaSchedule::constant(1), d, policy,
                               solve_equilibrium(sc.grid, 1.0).state(), {3.0, 0.01});
    const auto& log = policy.switcher().log();
    REQUIRE(log.size() == traj.size());
    // The step lands over row 10, so row 11 is the first with a frequency deviation.
    CHECK(log[10].phase == Phase::Deployment);
    CHECK(log[11].phase == Phase::Selection);
    for (std::size_t k = 0; k < log.size(); ++k) CHECK(log[k].arm == traj.controller_ids[k]);

    std::ostringstream out;
    write_switch_log(log, out);
    CHECK(out.str().rfind("t,phase,batch,arm,g,P_0,P_1,P_2\n", 0) == 0);
}

TEST_CASE("known switching follows the mode")
{
    std::vector<Controller> pool(3, Controller::neural_pi(3, 20, 1.0));
    const GridModel g = fixtures::triangle();
    pool[0].set_trained_mode("5");
    pool[1].set_trained_mode("0.3");
    pool[2].set_trained_mode("1");
    const auto map = match_pool_to_modes(pool, g);
    CHECK(map == std::vector<int>{1, 2, 0});
    KnownSwitchingPolicy policy(pool, map);
    CHECK(policy.select(0, 0.0, GridState::zeros(3), 0) == 1);
    CHECK(policy.select(0, 0.0, GridState::zeros(3), 2) == 0);
}
