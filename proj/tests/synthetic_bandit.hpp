#pragma once

#include <vector>

#include "gridswitch/switching.hpp"

namespace fixtures {

// Runs one selection phase against fixed per-arm stage costs and returns argmax(P).
inline int synthetic_selection(const std::vector<double>& costs, const gridswitch::SwitchConfig& config,
                               std::uint64_t seed)
{
    using namespace gridswitch;
    OnlineSwitcher sw(static_cast<int>(costs.size()), config, 60.0, seed);
    Vec disturbed = Vec::Constant(1, 1.0);
    long step = 0;
    sw.begin_step(step, disturbed);
    while (sw.state().phase != Phase::Trial) {
        const int arm = sw.begin_step(step, disturbed);
        sw.end_step(step, costs[static_cast<std::size_t>(arm)]);
        ++step;
    }
    return sw.state().committed;
}

inline int synthetic_successes(const std::vector<double>& costs, const gridswitch::SwitchConfig& config, int seeds)
{
    int best = 0;
    for (std::size_t i = 1; i < costs.size(); ++i)
        if (costs[i] < costs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    int hits = 0;
    for (int s = 0; s < seeds; ++s) hits += synthetic_selection(costs, config, static_cast<std::uint64_t>(s)) == best;
    return hits;
}

}  // namespace fixtures
