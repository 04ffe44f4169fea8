#include "gridswitch/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gridswitch {

namespace {

bool same(const Vec& a, const Vec& b)
{
    return a.size() == b.size() && (a.size() == 0 || a == b);
}

bool same(const Mat& a, const Mat& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

void require_size(const Vec& v, int n, const std::string& field)
{
    if (v.size() != n)
        throw ModelError(field + ": expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
}

void require_positive(const Vec& v, const std::string& field)
{
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0) || !std::isfinite(v[i]))
            throw ModelError("non-positive " + field + " at bus " + std::to_string(i));
}

}  // namespace

const Vec& GridModel::inertia_of(int mode) const
{
    if (mode < 0 || mode >= mode_count()) throw ModelError("mode index out of range: " + std::to_string(mode));
    return inertia[static_cast<std::size_t>(mode)];
}

void GridModel::validate() const
{
    if (n < 1) throw ModelError("bus count must be positive");
    for (const auto& l : lines) {
        if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n || l.from == l.to)
            throw ModelError("invalid line endpoints " + std::to_string(l.from) + "-" + std::to_string(l.to));
        if (!(l.susceptance > 0.0) || !std::isfinite(l.susceptance))
            throw ModelError("non-positive susceptance on line " + std::to_string(l.from) + "-" + std::to_string(l.to));
    }
    if (!is_connected(n, lines)) throw ModelError("graph is disconnected");
    require_size(damping, n, "damping");
    require_size(injection, n, "injection");
    require_size(cost, n, "cost");
    require_size(u_lower, n, "u_lower");
    require_size(u_upper, n, "u_upper");
    require_positive(damping, "damping");
    require_positive(cost, "cost");
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(injection[i])) throw ModelError("non-finite injection at bus " + std::to_string(i));
        if (!(u_lower[i] < 0.0 && 0.0 < u_upper[i]))
            throw ModelError("action bounds must satisfy u_lower < 0 < u_upper at bus " + std::to_string(i));
    }
    if (inertia.empty()) throw ModelError("at least one inertia mode is required");
    if (mode_labels.size() != inertia.size()) throw ModelError("mode labels and inertia modes differ in count");
    for (std::size_t q = 0; q < inertia.size(); ++q) {
        require_size(inertia[q], n, "inertia mode " + std::to_string(q));
        require_positive(inertia[q], "inertia");
    }
    if (!(base_hz > 0.0)) throw ModelError("non-positive base frequency");
}

bool GridModel::operator==(const GridModel& o) const
{
    if (name != o.name || n != o.n || lines != o.lines || mode_labels != o.mode_labels || base_hz != o.base_hz)
        return false;
    if (!same(damping, o.damping) || !same(injection, o.injection) || !same(cost, o.cost) ||
        !same(u_lower, o.u_lower) || !same(u_upper, o.u_upper))
        return false;
    if (inertia.size() != o.inertia.size()) return false;
    for (std::size_t q = 0; q < inertia.size(); ++q)
        if (!same(inertia[q], o.inertia[q])) return false;
    return true;
}

bool is_connected(int n, const std::vector<Line>& lines)
{
    if (n <= 0) return false;
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    int components = n;
    for (const auto& l : lines) {
        if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n) continue;
        int a = find(l.from), b = find(l.to);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components == 1;
}

Mat incidence_matrix(const GridModel& model)
{
    if (!is_connected(model.n, model.lines)) throw ModelError("graph is disconnected");
    Mat e = Mat::Zero(model.n, static_cast<Eigen::Index>(model.lines.size()));
    for (std::size_t k = 0; k < model.lines.size(); ++k) {
        e(model.lines[k].from, static_cast<Eigen::Index>(k)) = 1.0;
        e(model.lines[k].to, static_cast<Eigen::Index>(k)) = -1.0;
    }
    return e;
}

Mat weighted_laplacian(const GridModel& model)
{
    Mat l = Mat::Zero(model.n, model.n);
    for (const auto& line : model.lines) {
        l(line.from, line.from) += line.susceptance;
        l(line.to, line.to) += line.susceptance;
        l(line.from, line.to) -= line.susceptance;
        l(line.to, line.from) -= line.susceptance;
    }
    return l;
}

Mat communication_laplacian(const GridModel& model)
{
    Mat l = Mat::Zero(model.n, model.n);
    for (const auto& line : model.lines) {
        l(line.from, line.from) += 1.0;
        l(line.to, line.to) += 1.0;
        l(line.from, line.to) -= 1.0;
        l(line.to, line.from) -= 1.0;
    }
    return l;
}

InertiaSchedule InertiaSchedule::constant(int mode)
{
    return InertiaSchedule{{}, {mode}};
}

int InertiaSchedule::mode_at(double t) const
{
    auto it = std::upper_bound(switch_times.begin(), switch_times.end(), t);
    return modes[static_cast<std::size_t>(it - switch_times.begin())];
}

void InertiaSchedule::validate(int mode_count) const
{
    if (modes.size() != switch_times.size() + 1)
        throw ModelError("schedule needs exactly one more mode than switch times");
    for (std::size_t i = 1; i < switch_times.size(); ++i)
        if (!(switch_times[i] > switch_times[i - 1])) throw ModelError("switch times must be strictly increasing");
    for (int q : modes)
        if (q < 0 || q >= mode_count) throw ModelError("schedule mode index out of range: " + std::to_string(q));
}

InertiaChain InertiaChain::standard_three_mode()
{
    InertiaChain chain;
    chain.initial = {0.10, 0.45, 0.45};
    chain.transition.resize(3, 3);
    chain.transition << 0.5, 0.5, 0.0,
                        0.3, 0.4, 0.3,
                        0.0, 0.5, 0.5;
    return chain;
}

void InertiaChain::validate() const
{
    const auto m = static_cast<Eigen::Index>(initial.size());
    if (m == 0) throw ModelError("empty inertia chain");
    if (transition.rows() != m || transition.cols() != m)
        throw ModelError("transition matrix must be " + std::to_string(m) + "x" + std::to_string(m));
    auto check_row = [](auto row, const std::string& what) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < row.size(); ++j) {
            if (row[j] < 0.0) throw ModelError(what + " has a negative entry");
            sum += row[j];
        }
        if (std::abs(sum - 1.0) > 1e-12) throw ModelError(what + " is not stochastic");
    };
    check_row(Eigen::Map<const Vec>(initial.data(), m), "initial distribution");
    for (Eigen::Index i = 0; i < m; ++i) check_row(transition.row(i), "transition row " + std::to_string(i));
}

bool ScheduleSettings::operator==(const ScheduleSettings& o) const
{
    if (horizon_s != o.horizon_s || dwell_s != o.dwell_s || randomized_dwell != o.randomized_dwell) return false;
    if (chain.has_value() != o.chain.has_value()) return false;
    if (!chain) return true;
    return chain->initial == o.chain->initial && same(chain->transition, o.chain->transition);
}

InertiaChain resolve_chain(const ScheduleSettings& settings, int mode_count)
{
    InertiaChain chain;
    if (settings.chain) {
        chain = *settings.chain;
    } else if (mode_count == 3) {
        chain = InertiaChain::standard_three_mode();
    } else {
        throw ModelError("a transition matrix is required for " + std::to_string(mode_count) + " modes");
    }
    chain.validate();
    if (chain.size() != mode_count) throw ModelError("transition matrix size does not match the mode count");
    return chain;
}

namespace {

int draw(Rng& rng, const double* probs, int m)
{
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double r = uni(rng);
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        acc += probs[i];
        if (r < acc) return i;
    }
    for (int i = m - 1; i >= 0; --i)
        if (probs[i] > 0.0) return i;
    return m - 1;
}

}  // namespace

InertiaSchedule sample_inertia_schedule(std::uint64_t seed, double horizon_s, double dwell_s,
                                        const InertiaChain& chain, bool randomized_dwell)
{
    if (!(dwell_s > 0.0)) throw ModelError("dwell time must be positive");
    chain.validate();
    Rng rng(seed);
    const int m = chain.size();
    InertiaSchedule schedule;
    int mode = draw(rng, chain.initial.data(), m);
    schedule.modes.push_back(mode);
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    std::vector<double> row(static_cast<std::size_t>(m));
    // Integer step counting keeps fixed-dwell switch times exact multiples of dwell_s.
    double t = 0.0;
    for (long k = 1;; ++k) {
        t = randomized_dwell ? t + dwell_s * jitter(rng) : static_cast<double>(k) * dwell_s;
        if (t >= horizon_s - 1e-12) break;
        for (int j = 0; j < m; ++j) row[static_cast<std::size_t>(j)] = chain.transition(mode, j);
        mode = draw(rng, row.data(), m);
        schedule.switch_times.push_back(t);
        schedule.modes.push_back(mode);
    }
    return schedule;
}

Vec DisturbanceProfile::value_at(double t, int n) const
{
    const DisturbanceEvent* latest = nullptr;
    for (const auto& e : events)
        if (e.time <= t && (!latest || e.time >= latest->time)) latest = &e;
    return latest ? latest->step : Vec::Zero(n);
}

double DisturbanceProfile::sup_inf_norm() const
{
    double s = 0.0;
    for (const auto& e : events) s = std::max(s, e.step.lpNorm<Eigen::Infinity>());
    return s;
}

double DisturbanceProfile::sup_two_norm() const
{
    double s = 0.0;
    for (const auto& e : events) s = std::max(s, e.step.norm());
    return s;
}

void DisturbanceProfile::validate(int n) const
{
    for (const auto& e : events) {
        if (e.step.size() != n) throw ModelError("disturbance step has wrong length");
        if (!std::isfinite(e.time) || !e.step.allFinite()) throw ModelError("disturbance must be finite");
    }
}

Vec sample_disturbance_step(Rng& rng, int n, double magnitude)
{
    std::uniform_int_distribution<int> bus(0, n - 1);
    std::uniform_real_distribution<double> amp(-magnitude, magnitude);
    Vec step = Vec::Zero(n);
    const int i = bus(rng);
    step[i] = amp(rng);
    return step;
}

}  // namespace gridswitch
