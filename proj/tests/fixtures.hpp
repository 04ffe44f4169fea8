#pragma once

#include "gridswitch/grid_model.hpp"

namespace fixtures {

using gridswitch::GridModel;
using gridswitch::Vec;

inline Vec vec(std::initializer_list<double> xs)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

// Two buses joined by one unit line, unit parameters, three modes.
inline GridModel two_bus()
{
    GridModel g;
    g.name = "two_bus";
    g.n = 2;
    g.lines = {{0, 1, 1.0}};
    g.damping = vec({1.0, 1.0});
    g.injection = vec({0.2, -0.4});
    g.cost = vec({1.0, 1.0});
    g.u_lower = vec({-1.0, -1.0});
    g.u_upper = vec({1.0, 1.0});
    g.mode_labels = {0.3, 1.0, 5.0};
    for (double s : g.mode_labels) g.inertia.push_back(vec({0.5 * s, 0.5 * s}));
    return g;
}

inline GridModel triangle()
{
    GridModel g;
    g.name = "triangle";
    g.n = 3;
    g.lines = {{0, 1, 1.5}, {1, 2, 1.2}, {0, 2, 1.0}};
    g.damping = vec({0.5, 0.4, 0.6});
    g.injection = vec({0.2, 0.1, -0.35});
    g.cost = vec({1.0, 2.0, 1.5});
    g.u_lower = vec({-1.0, -1.0, -1.0});
    g.u_upper = vec({1.0, 1.0, 1.0});
    g.mode_labels = {0.3, 1.0, 5.0};
    for (double s : g.mode_labels) g.inertia.push_back(s * vec({0.2, 0.25, 0.22}));
    return g;
}

}  // namespace fixtures
