#include "gridswitch/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace gridswitch {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

}  // namespace

Equilibrium solve_equilibrium(const GridModel& model, double k)
{
    if (!(k > 0.0)) throw std::invalid_argument("solve_equilibrium: k must be positive");
    const GridOperators ops(model);
    const int n = model.n;
    Equilibrium eq;
    eq.k = k;
    eq.gamma = -model.injection.sum() / model.cost.cwiseInverse().sum();
    const Vec ks = eq.gamma * model.cost.cwiseInverse();
    eq.s = ks / k;
    eq.omega = Vec::Zero(n);

    const Vec target = model.injection + ks;
    const Mat ones = Mat::Constant(n, n, 1.0 / n);
    Vec delta = Vec::Zero(n);
    Vec residual = electrical_power(delta, ops) - target;
    for (int it = 0; it < 100 && residual.norm() > 1e-13; ++it) {
        const Mat J = power_jacobian(delta, ops) + ones;
        const Vec dir = -J.fullPivLu().solve(residual);
        double step = 1.0;
        Vec trial;
        Vec trial_res;
        for (int back = 0; back < 40; ++back, step *= 0.5) {
            trial = delta + step * dir;
            trial.array() -= trial.mean();
            trial_res = electrical_power(trial, ops) - target;
            if (trial_res.norm() < residual.norm()) break;
        }
        if (!(trial_res.norm() < residual.norm())) break;
        delta = trial;
        residual = trial_res;
    }
    if (!(residual.norm() <= 1e-10))
        throw InfeasibleEquilibrium("power flow did not converge (residual " + format_double(residual.norm()) + ")");
    if (max_edge_gap(delta, ops) >= kHalfPi)
        throw InfeasibleEquilibrium("equilibrium angle gap reaches pi/2");
    eq.delta = delta;
    return eq;
}

Vec error_coordinates(const GridState& state, const Equilibrium& eq)
{
    const auto n = state.delta.size();
    Vec x(3 * n);
    x << state.delta - eq.delta, state.omega - eq.omega, eq.k * (state.s - eq.s);
    return x;
}

double max_edge_gap(const Vec& delta, const GridOperators& ops)
{
    if (ops.E.cols() == 0) return 0.0;
    return (ops.E.transpose() * delta).cwiseAbs().maxCoeff();
}

bool in_domain(const Vec& delta, const GridOperators& ops, double margin)
{
    return max_edge_gap(delta, ops) < kHalfPi - margin;
}

double potential_energy(const Vec& delta, const Equilibrium& eq, const GridOperators& ops)
{
    if (ops.E.cols() == 0) return 0.0;
    const Vec g = ops.E.transpose() * delta;
    const Vec g0 = ops.E.transpose() * eq.delta;
    const double coupling = -(ops.B.array() * (g.array().cos() - g0.array().cos())).sum();
    return coupling - electrical_power(eq.delta, ops).dot(delta - eq.delta);
}

LyapunovValue lyapunov_value(const GridState& x, const Equilibrium& eq, const GridModel& model, int mode,
                             const LyapunovWeights& w)
{
    const GridOperators ops(model);
    const Vec& m = model.inertia_of(mode);
    const Vec mw = m.cwiseProduct(x.omega);
    const Vec ds = x.s - eq.s;
    const Vec dpe = electrical_power(x.delta, ops) - electrical_power(eq.delta, ops);
    LyapunovValue out;
    out.value = 0.5 * x.omega.dot(mw) + potential_energy(x.delta, eq, ops) +
                w.eps1 * dpe.dot(model.cost.cwiseProduct(mw)) +
                0.5 * eq.k * (model.cost.array() * ds.array().square()).sum() - w.eps2 * ds.sum() * mw.sum();
    out.in_domain = in_domain(x.delta, ops);
    return out;
}

GridState lyapunov_gradient(const GridState& x, const Equilibrium& eq, const GridModel& model, int mode,
                            const LyapunovWeights& w)
{
    const GridOperators ops(model);
    const Vec& m = model.inertia_of(mode);
    const Vec mw = m.cwiseProduct(x.omega);
    const Vec ds = x.s - eq.s;
    const Vec dpe = electrical_power(x.delta, ops) - electrical_power(eq.delta, ops);
    const auto n = x.delta.size();
    GridState g;
    g.delta = dpe + w.eps1 * (power_jacobian(x.delta, ops) * model.cost.cwiseProduct(mw));
    g.omega = mw + w.eps1 * m.cwiseProduct(model.cost.cwiseProduct(dpe)) - w.eps2 * ds.sum() * m;
    g.s = eq.k * model.cost.cwiseProduct(ds) - w.eps2 * mw.sum() * Vec::Ones(n);
    return g;
}

GridState closed_loop_rate(const GridState& x, const Controller& ctrl, const Vec& dd, int mode,
                           const GridModel& model, const GridOperators& ops)
{
    const Vec u = ctrl.action(x.omega, x.s, model);
    GridState r;
    r.delta = ops.P * x.omega;
    r.omega = (model.injection - model.damping.cwiseProduct(x.omega) + u - electrical_power(x.delta, ops) + dd)
                  .cwiseQuotient(model.inertia_of(mode));
    r.s = ctrl.has_integral() ? integral_rate(x.omega, x.s, ctrl.integral_gain(), model, ops)
                              : Vec(Vec::Zero(x.s.size()));
    return r;
}

double lie_derivative(const GridState& x, const Controller& ctrl, const Vec& dd, const Equilibrium& eq,
                      const GridModel& model, int mode, const LyapunovWeights& w)
{
    const GridOperators ops(model);
    const GridState g = lyapunov_gradient(x, eq, model, mode, w);
    const GridState f = closed_loop_rate(x, ctrl, dd, mode, model, ops);
    return g.delta.dot(f.delta) + g.omega.dot(f.omega) + g.s.dot(f.s);
}

Mat q_matrix(const Vec& delta, const Vec& kdiag, const GridModel& model, int mode, double k,
             const LyapunovWeights& w, const GridOperators& ops)
{
    const int n = model.n;
    const Mat C = model.cost.asDiagonal();
    const Mat Cinv = model.cost.cwiseInverse().asDiagonal();
    const Mat M = model.inertia_of(mode).asDiagonal();
    const Mat DK = (model.damping + kdiag).asDiagonal();
    const Mat D = model.damping.asDiagonal();
    const Mat ones = Mat::Ones(n, n);
    const Mat H = power_jacobian(delta, ops);
    Mat Q = Mat::Zero(3 * n, 3 * n);
    Q.block(0, 0, n, n) = w.eps1 * C;
    Q.block(0, n, n, n) = w.eps1 * C * DK;
    Q.block(0, 2 * n, n, n) = -w.eps1 * C;
    Q.block(n, n, n, n) = D - w.eps1 * M * C * H - w.eps2 * M * ones * Cinv;
    Q.block(n, 2 * n, n, n) = -(w.eps2 / k) * DK * ones;
    Q.block(2 * n, 2 * n, n, n) = C * ops.L * C + (w.eps2 / k) * ones;
    return Q;
}

Vec sample_domain_angles(const Equilibrium& eq, const GridOperators& ops, double margin, Rng& rng, bool on_boundary)
{
    const auto n = eq.delta.size();
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec dir(n);
    for (;;) {
        for (Eigen::Index i = 0; i < n; ++i) dir[i] = normal(rng);
        dir.array() -= dir.mean();
        if (dir.norm() > 1e-9) break;
    }
    dir.normalize();
    double t_max = std::numeric_limits<double>::infinity();
    if (ops.E.cols() > 0) {
        const Vec g0 = ops.E.transpose() * eq.delta;
        const Vec gv = ops.E.transpose() * dir;
        const double bound = kHalfPi - margin;
        for (Eigen::Index l = 0; l < g0.size(); ++l) {
            if (gv[l] > 0.0) t_max = std::min(t_max, (bound - g0[l]) / gv[l]);
            else if (gv[l] < 0.0) t_max = std::min(t_max, (-bound - g0[l]) / gv[l]);
        }
    }
    if (!std::isfinite(t_max)) t_max = 1.0;
    const double frac = on_boundary ? 1.0 : std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return eq.delta + std::max(frac, 1e-3) * t_max * dir;
}

namespace {

struct DomainSample {
    Vec delta;
    std::vector<Vec> slopes;
};

double min_sym_eigenvalue(const Mat& Q)
{
    const Mat sym = 0.5 * (Q + Q.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

IssCertificate compute_certificate(const GridModel& model, int mode, const Controller& ctrl,
                                   const CertificateOptions& options)
{
    IssCertificate cert;
    cert.mode = mode;
    cert.seed = options.seed;
    cert.samples = options.samples;
    if (ctrl.kind() != ControllerKind::NeuralPI && ctrl.kind() != ControllerKind::LinearPI) {
        cert.failure = "controller has no monotone proportional term with an integral layer";
        return cert;
    }
    const double k = ctrl.integral_gain();
    cert.k = k;
    const int n = model.n;
    const GridOperators ops(model);
    Equilibrium eq;
    try {
        eq = solve_equilibrium(model, k);
    } catch (const InfeasibleEquilibrium& e) {
        cert.failure = e.what();
        return cert;
    }
    Rng rng(derive_seed(options.seed, 0x63657274ULL, static_cast<std::uint64_t>(mode)));

    // Curvature of W_p along rays inside D, boundary included.
    double eta1 = std::numeric_limits<double>::infinity();
    double eta2 = 0.0;
    cert.max_slope = ctrl.max_slope();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<DomainSample> samples;
    samples.reserve(static_cast<std::size_t>(options.samples));
    const bool all_corners = n <= 10;
    for (int j = 0; j < options.samples; ++j) {
        DomainSample ds;
        ds.delta = sample_domain_angles(eq, ops, options.margin, rng, j % 4 == 0);
        const Vec dd = ds.delta - eq.delta;
        const double r = 2.0 * potential_energy(ds.delta, eq, ops) / dd.squaredNorm();
        eta1 = std::min(eta1, r);
        eta2 = std::max(eta2, r);
        if (all_corners) {
            for (int mask = 0; mask < (1 << n); ++mask) {
                Vec kd(n);
                for (int i = 0; i < n; ++i) kd[i] = (mask >> i & 1) ? cert.max_slope : 0.0;
                ds.slopes.push_back(kd);
            }
        } else {
            ds.slopes.push_back(Vec::Zero(n));
            ds.slopes.push_back(Vec::Constant(n, cert.max_slope));
        }
        Vec kd(n);
        for (int i = 0; i < n; ++i) kd[i] = unit(rng) * cert.max_slope;
        ds.slopes.push_back(kd);
        samples.push_back(std::move(ds));
    }
    cert.eta1 = eta1;
    cert.eta2 = eta2;
    if (!(eta1 > 0.0)) {
        cert.failure = "potential energy is not positive definite on the sampled domain";
        return cert;
    }

    const Vec& mvec = model.inertia_of(mode);
    const double mmin = mvec.minCoeff(), mmax = mvec.maxCoeff();
    const double cmax = model.cost.maxCoeff(), cmin = model.cost.minCoeff();
    const double nn = static_cast<double>(n) * n;
    double eps = options.initial_epsilon;
    for (int h = 0; h <= options.max_halvings; ++h, eps *= 0.5) {
        const double e1 = eps, e2 = eps;
        const double a1 = 0.5 * std::min({mmin - (e1 + e2) * mmax * mmax, eta1 - e1 * eta2 * eta2 * cmax * cmax,
                                          (k * cmin - e2 * nn) / (k * k)});
        if (!(a1 > 0.0)) continue;
        double lam = std::numeric_limits<double>::infinity();
        const LyapunovWeights w{e1, e2};
        for (const auto& ds : samples) {
            for (const auto& kd : ds.slopes) {
                lam = std::min(lam, min_sym_eigenvalue(q_matrix(ds.delta, kd, model, mode, k, w, ops)));
                if (!(lam > 0.0)) break;
            }
            if (!(lam > 0.0)) break;
        }
        if (!(lam > 0.0)) continue;
        cert.halvings = h;
        cert.epsilon1 = e1;
        cert.epsilon2 = e2;
        cert.a1 = a1;
        cert.a2 = 0.5 * std::max({mmax + (e1 + e2) * mmax * mmax, eta2 + e1 * eta2 * eta2 * cmax * cmax,
                                  (k * cmax + e2 * nn) / (k * k)});
        cert.min_eigenvalue = lam;
        cert.a3 = lam * std::min(1.0, eta1 * eta1);
        cert.a4 = std::sqrt(std::max({1.0, eta2 * eta2 * cmax * cmax, nn}));
        cert.alpha1 = cert.a3 / cert.a2;
        cert.alpha2 = cert.a4 * std::sqrt(1.0 + e1 * e1 + (e2 / k) * (e2 / k)) / std::sqrt(cert.a1);
        cert.kappa = std::sqrt(cert.a2 / cert.a1);
        cert.rho = std::exp(-cert.alpha1 / 2.0);
        cert.beta = cert.alpha2 / (cert.alpha1 * std::sqrt(cert.a1));
        cert.certified = cert.alpha1 > 0.0 && cert.rho < 1.0;
        if (!cert.certified) cert.failure = "decay rate underflows";
        return cert;
    }
    cert.failure = "no epsilon within " + std::to_string(options.max_halvings) +
                   " halvings gives a1 > 0 and a positive definite Q";
    return cert;
}

std::string certificate_to_text(const IssCertificate& c)
{
    std::ostringstream o;
    o << "kind sampled\n"
      << "certified " << (c.certified ? "true" : "false") << '\n'
      << "mode " << c.mode << '\n'
      << "k " << format_double(c.k) << '\n'
      << "epsilon1 " << format_double(c.epsilon1) << '\n'
      << "epsilon2 " << format_double(c.epsilon2) << '\n'
      << "eta1 " << format_double(c.eta1) << '\n'
      << "eta2 " << format_double(c.eta2) << '\n'
      << "a1 " << format_double(c.a1) << '\n'
      << "a2 " << format_double(c.a2) << '\n'
      << "a3 " << format_double(c.a3) << '\n'
      << "a4 " << format_double(c.a4) << '\n'
      << "alpha1 " << format_double(c.alpha1) << '\n'
      << "alpha2 " << format_double(c.alpha2) << '\n'
      << "kappa " << format_double(c.kappa) << '\n'
      << "rho " << format_double(c.rho) << '\n'
      << "beta " << format_double(c.beta) << '\n'
      << "min_eigenvalue " << format_double(c.min_eigenvalue) << '\n'
      << "max_slope " << format_double(c.max_slope) << '\n'
      << "samples " << c.samples << '\n'
      << "halvings " << c.halvings << '\n'
      << "seed " << c.seed << '\n';
    if (!c.failure.empty()) o << "failure " << c.failure << '\n';
    return o.str();
}

SandwichReport check_sandwich(const IssCertificate& cert, const GridModel& model, int samples, std::uint64_t seed,
                              double margin)
{
    const Equilibrium eq = solve_equilibrium(model, cert.k);
    const GridOperators ops(model);
    Rng rng(derive_seed(seed, 0x73616e64ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.0, 2.0);
    SandwichReport rep;
    for (int j = 0; j < samples; ++j) {
        GridState x;
        x.delta = sample_domain_angles(eq, ops, margin, rng);
        const double sw = scale(rng), ss = scale(rng);
        x.omega = Vec::NullaryExpr(model.n, [&] { return sw * normal(rng); });
        x.s = eq.s + Vec::NullaryExpr(model.n, [&] { return ss * normal(rng); });
        const double v = lyapunov_value(x, eq, model, cert.mode, cert.weights()).value;
        const double r2 = error_coordinates(x, eq).squaredNorm();
        if (r2 == 0.0) continue;
        ++rep.samples;
        rep.min_lower_ratio = std::min(rep.min_lower_ratio, v / (cert.a1 * r2));
        rep.max_upper_ratio = std::max(rep.max_upper_ratio, v / (cert.a2 * r2));
        if (v < cert.a1 * r2 || v > cert.a2 * r2) ++rep.violations;
    }
    return rep;
}

SwitchedEnvelope switched_envelope(const std::vector<IssCertificate>& certs, double tau_a)
{
    if (certs.empty()) throw std::invalid_argument("switched_envelope: no certificates");
    SwitchedEnvelope env;
    env.tau_a = tau_a;
    env.alpha1_min = std::numeric_limits<double>::infinity();
    for (const auto& p : certs) {
        env.kappa = std::max(env.kappa, p.kappa);
        env.beta = std::max(env.beta, p.beta);
        env.alpha1_min = std::min(env.alpha1_min, p.alpha1);
        for (const auto& q : certs) env.mu = std::max(env.mu, p.a2 / q.a1);
    }
    env.tau_a_star = std::log(env.mu) / env.alpha1_min;
    env.dwell_condition = tau_a > env.tau_a_star;
    const double rate = std::isfinite(tau_a) ? env.alpha1_min - std::log(env.mu) / tau_a : env.alpha1_min;
    env.rho = std::exp(-rate / 2.0);
    return env;
}

EnvelopeReport verify_envelope(const Trajectory& traj, const Equilibrium& eq, const std::vector<IssCertificate>& certs,
                               double dwell_s, const GridModel& model, const std::vector<Controller>* pool,
                               double slack, double descent_tol)
{
    EnvelopeReport rep;
    rep.slack = slack;
    rep.envelope = switched_envelope(certs, dwell_s);
    if (traj.size() == 0) return rep;
    const auto& env = rep.envelope;
    const double x0 = error_coordinates(traj.states.front(), eq).norm();
    double dd_sup = 0.0;
    // Rounding in the error coordinates of a state sitting at equilibrium.
    const double floor = 1e-12 * (1.0 + eq.state().delta.norm() + eq.state().s.norm());
    auto cert_for = [&](int mode) -> const IssCertificate& {
        for (const auto& c : certs)
            if (c.mode == mode) return c;
        throw std::invalid_argument("verify_envelope: no certificate for mode " + std::to_string(mode));
    };
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const double t = traj.time(k);
        dd_sup = std::max(dd_sup, traj.disturbances[k].norm());
        const double norm = error_coordinates(traj.states[k], eq).norm();
        const double bound = slack * (env.kappa * std::pow(env.rho, t) * x0 + env.beta * dd_sup);
        if (bound > 0.0) rep.max_ratio = std::max(rep.max_ratio, norm / bound);
        if (norm > bound + floor) rep.violations.push_back({t, "envelope", norm, bound});

        const int mode = traj.modes[k];
        const auto& cert = cert_for(mode);
        if (k > 0 && traj.controller_ids[k] != traj.controller_ids[k - 1]) {
            // V has no controller argument: the value reached under the outgoing
            // controller is the value seen by the incoming one.
            ++rep.controller_switches;
            const double before = lyapunov_value(traj.states[k], eq, model, mode, cert.weights()).value;
            const double after = lyapunov_value(traj.states[k], eq, model, mode, cert.weights()).value;
            const double jump = std::abs(after - before);
            rep.max_switch_jump = std::max(rep.max_switch_jump, jump);
            if (jump >= 1e-10) rep.violations.push_back({t, "lyapunov jump at controller switch", jump, 1e-10});
        }
        if (pool && traj.disturbances[k].isZero(0.0)) {
            const auto& ctrl = (*pool)[static_cast<std::size_t>(traj.controller_ids[k])];
            const double v = lyapunov_value(traj.states[k], eq, model, mode, cert.weights()).value;
            const double vdot =
                lie_derivative(traj.states[k], ctrl, traj.disturbances[k], eq, model, mode, cert.weights());
            const double excess = vdot + cert.alpha1 * v;
            ++rep.descent_checks;
            rep.max_descent_excess = std::max(rep.max_descent_excess, excess);
            if (excess > descent_tol) rep.violations.push_back({t, "lyapunov descent", vdot, -cert.alpha1 * v});
        }
    }
    return rep;
}

int switch_count(const InertiaSchedule& schedule, double t1, double t2)
{
    int count = 0;
    for (std::size_t i = 0; i < schedule.switch_times.size(); ++i) {
        const double t = schedule.switch_times[i];
        if (t >= t1 && t < t2 && schedule.modes[i + 1] != schedule.modes[i]) ++count;
    }
    return count;
}

DwellStats dwell_time_stats(const InertiaSchedule& schedule, double horizon_s, double n0)
{
    DwellStats st;
    st.n0 = n0;
    for (std::size_t i = 0; i < schedule.switch_times.size(); ++i)
        if (schedule.switch_times[i] < horizon_s && schedule.modes[i + 1] != schedule.modes[i])
            st.times.push_back(schedule.switch_times[i]);
    st.switches = static_cast<int>(st.times.size());
    // The tightest window holding switches i..j is [t_i, t_j].
    for (std::size_t i = 0; i < st.times.size(); ++i)
        for (std::size_t j = i; j < st.times.size(); ++j) {
            const double count = static_cast<double>(j - i + 1);
            if (count > n0) st.tau_a = std::min(st.tau_a, (st.times[j] - st.times[i]) / (count - n0));
        }
    return st;
}

}  // namespace gridswitch
