#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gridswitch/stability.hpp"

using namespace gridswitch;
using fixtures::vec;

namespace {

GridModel wide_bounds(GridModel g)
{
    g.u_lower = Vec::Constant(g.n, -100.0);
    g.u_upper = Vec::Constant(g.n, 100.0);
    return g;
}

GridState perturbed(const Equilibrium& eq, const Vec& dd, const Vec& w, const Vec& ds)
{
    GridState x = eq.state();
    x.delta += dd;
    x.omega = w;
    x.s += ds;
    return x;
}

}  // namespace

TEST_CASE("equilibrium of the two-bus case")
{
    const GridModel g = fixtures::two_bus();
    const Equilibrium eq = solve_equilibrium(g, 1.0);
    CHECK(eq.gamma == doctest::Approx(0.1));
    CHECK(eq.k * eq.s(0) == doctest::Approx(0.1));
    CHECK(eq.k * eq.s(1) == doctest::Approx(0.1));
    CHECK(eq.omega.isZero());
    CHECK(std::abs(eq.delta.sum()) < 1e-12);
    // Line flow balances bus 0: sin(d0 - d1) = p0 + k s0.
    CHECK(std::sin(eq.delta(0) - eq.delta(1)) == doctest::Approx(0.3).epsilon(1e-10));
}

TEST_CASE("equilibrium with zero injection is the origin")
{
    GridModel g = fixtures::triangle();
    g.injection.setZero();
    const Equilibrium eq = solve_equilibrium(g, 2.0);
    CHECK(eq.delta.norm() < 1e-12);
    CHECK(eq.s.norm() == 0.0);
    CHECK(eq.gamma == 0.0);
}

TEST_CASE("equilibrium balances power")
{
    const GridModel g = fixtures::triangle();
    for (double k : {0.5, 1.0, 3.0}) {
        const Equilibrium eq = solve_equilibrium(g, k);
        CHECK(std::abs((g.injection + k * eq.s).sum()) < 1e-12);
        const Vec mismatch = electrical_power(eq.delta, g) - g.injection - k * eq.s;
        CHECK(mismatch.norm() < 1e-10);
        CHECK((k * eq.s).cwiseProduct(g.cost).maxCoeff() == doctest::Approx(eq.gamma));
    }
}

TEST_CASE("infeasible injections are reported")
{
    GridModel g = fixtures::two_bus();
    g.injection = vec({3.0, -3.0});
    g.cost = vec({1.0, 1e6});
    CHECK_THROWS_AS(solve_equilibrium(g, 1.0), InfeasibleEquilibrium);
}

TEST_CASE("storage function values")
{
    GridModel g = fixtures::two_bus();
    g.inertia[1] = vec({2.0, 2.0});
    const Equilibrium eq = solve_equilibrium(g, 1.0);
    const LyapunovWeights w{0.01, 0.01};
    CHECK(lyapunov_value(eq.state(), eq, g, 1, w).value == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    GridState x = eq.state();
    x.omega = vec({0.1, 0.0});
    CHECK(lyapunov_value(x, eq, g, 1, w).value == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("storage gradient matches central differences")
{
    const GridModel g = fixtures::triangle();
    const Equilibrium eq = solve_equilibrium(g, 1.0);
    const LyapunovWeights w{0.02, 0.01};
    const GridState x = perturbed(eq, vec({0.1, -0.2, 0.1}), vec({0.03, -0.01, 0.02}), vec({0.05, 0.0, -0.1}));
    const GridState grad = lyapunov_gradient(x, eq, g, 0, w);
    const double h = 1e-6;
    auto check = [&](Vec GridState::*field, const Vec& analytic) {
        for (Eigen::Index i = 0; i < 3; ++i) {
            GridState up = x, down = x;
            (up.*field)(i) += h;
            (down.*field)(i) -= h;
            const double fd =
                (lyapunov_value(up, eq, g, 0, w).value - lyapunov_value(down, eq, g, 0, w).value) / (2 * h);
            CHECK(analytic(i) == doctest::Approx(fd).epsilon(1e-6));
        }
    };
    check(&GridState::delta, grad.delta);
    check(&GridState::omega, grad.omega);
    check(&GridState::s, grad.s);
}

TEST_CASE("Lie derivative identity for a linear controller")
{
    const GridModel g = wide_bounds(fixtures::triangle());
    const double k = 1.3, gain = 0.8;
    const Controller c = Controller::linear_pi(3, gain, k);
    const Equilibrium eq = solve_equilibrium(g, k);
    const GridOperators ops(g);
    const LyapunovWeights w{0.01, 0.005};
    const GridState x = perturbed(eq, vec({0.1, -0.05, -0.05}), vec({0.02, -0.01, 0.03}), vec({0.05, 0.0, -0.02}));
    const Vec dd = vec({0.0, 0.1, -0.03});
    for (int q = 0; q < 3; ++q) {
        Vec z(9);
        z << electrical_power(x.delta, ops) - electrical_power(eq.delta, ops), x.omega, k * (x.s - eq.s);
        const Mat Q = q_matrix(x.delta, Vec::Constant(3, gain), g, q, k, w, ops);
        const double undisturbed = -z.dot(Q * z) - gain * x.omega.squaredNorm();
        CHECK(lie_derivative(x, c, Vec::Zero(3), eq, g, q, w) == doctest::Approx(undisturbed).epsilon(1e-10));

        // The disturbance enters through the omega gradient divided by M.
        const Vec dpe = z.head(3);
        const Vec weight = x.omega + w.eps1 * g.cost.cwiseProduct(dpe) -
                           Vec::Constant(3, w.eps2 * (x.s - eq.s).sum());
        CHECK(lie_derivative(x, c, dd, eq, g, q, w) == doctest::Approx(undisturbed + weight.dot(dd)).epsilon(1e-10));

        // And it is the time derivative of V along the flow.
        const GridState f = closed_loop_rate(x, c, dd, q, g, ops);
        const double h = 1e-6;
        const GridState up{x.delta + h * f.delta, x.omega + h * f.omega, x.s + h * f.s};
        const GridState down{x.delta - h * f.delta, x.omega - h * f.omega, x.s - h * f.s};
        const double fd = (lyapunov_value(up, eq, g, q, w).value - lyapunov_value(down, eq, g, q, w).value) / (2 * h);
        CHECK(lie_derivative(x, c, dd, eq, g, q, w) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("two-bus linear controller is certified")
{
    const GridModel g = fixtures::two_bus();
    const Controller c = Controller::linear_pi(2, 1.0, 1.0);
    CertificateOptions opt;
    opt.samples = 500;
    opt.seed = 3;
    for (int q = 0; q < 3; ++q) {
        const IssCertificate cert = compute_certificate(g, q, c, opt);
        REQUIRE(cert.certified);
        CHECK(cert.rho < 1.0);
        CHECK(cert.rho > 0.0);
        CHECK(cert.kappa >= 1.0);
        CHECK(cert.a1 > 0.0);
        CHECK(cert.a2 >= cert.a1);
        CHECK(cert.alpha1 > 0.0);
        CHECK(cert.rho == doctest::Approx(std::exp(-cert.alpha1 / 2.0)));
        CHECK(cert.kappa == doctest::Approx(std::sqrt(cert.a2 / cert.a1)));

        const SandwichReport sw = check_sandwich(cert, g, 500, 9);
        CHECK(sw.samples == 500);
        CHECK(sw.violations == 0);
        CHECK(sw.min_lower_ratio >= 1.0 - 1e-9);
        CHECK(sw.max_upper_ratio <= 1.0 + 1e-9);

        const std::string text = certificate_to_text(cert);
        CHECK(text.find("sampled") != std::string::npos);
    }
}

TEST_CASE("oversized weights without halving fail to certify")
{
    const GridModel g = fixtures::two_bus();
    const Controller c = Controller::linear_pi(2, 1.0, 1.0);
    CertificateOptions opt;
    opt.samples = 200;
    opt.initial_epsilon = 100.0;
    opt.max_halvings = 0;
    const IssCertificate cert = compute_certificate(g, 1, c, opt);
    CHECK_FALSE(cert.certified);
    CHECK_FALSE(cert.failure.empty());
}

TEST_CASE("undisturbed decay is at least a quarter of the certified rate")
{
    const GridModel g = fixtures::two_bus();
    const Controller c = Controller::linear_pi(2, 1.0, 1.0);
    CertificateOptions opt;
    opt.samples = 500;
    const int q = 1;
    const IssCertificate cert = compute_certificate(g, q, c, opt);
    REQUIRE(cert.certified);
    const Equilibrium eq = solve_equilibrium(g, 1.0);
    FixedPolicy policy(c);
    const GridState x0 = perturbed(eq, vec({0.2, -0.2}), vec({0.05, -0.05}), vec({0.1, -0.1}));
    const auto traj = simulate(g, InertiaSchedule::constant(q), {}, policy, x0, {10.0, 0.01});
    // Least-squares slope of log V against t.
    double st = 0, sv = 0, stt = 0, stv = 0;
    int count = 0;
    for (std::size_t k = 0; k < traj.size(); k += 10) {
        const double v = lyapunov_value(traj.states[k], eq, g, q, cert.weights()).value;
        if (!(v > 1e-20)) break;
        const double t = traj.time(k), lv = std::log(v);
        st += t, sv += lv, stt += t * t, stv += t * lv;
        ++count;
    }
    REQUIRE(count > 10);
    const double slope = (count * stv - st * sv) / (count * stt - st * st);
    CHECK(-slope >= cert.alpha1 / 4.0);
}

TEST_CASE("dwell-time statistics")
{
    InertiaSchedule s;
    s.switch_times = {5.0, 10.0, 15.0};
    s.modes = {1, 0, 1, 2};
    const DwellStats d = dwell_time_stats(s, 20.0);
    CHECK(d.switches == 3);
    CHECK(d.times == std::vector<double>{5.0, 10.0, 15.0});
    // Three switches fit in any window just over 10 s: 3 <= 1 + 10 / tau.
    CHECK(d.tau_a == doctest::Approx(5.0));
    CHECK(switch_count(s, 0.0, 10.0) == 1);
    CHECK(switch_count(s, 0.0, 10.0 + 1e-9) == 2);

    InertiaSchedule self;
    self.switch_times = {5.0, 10.0};
    self.modes = {1, 1, 2};
    CHECK(dwell_time_stats(self, 20.0).switches == 1);

    const DwellStats none = dwell_time_stats(InertiaSchedule::constant(0), 20.0);
    CHECK(none.switches == 0);
    CHECK(std::isinf(none.tau_a));
}

TEST_CASE("switched envelope constants")
{
    const GridModel g = fixtures::two_bus();
    const Controller c = Controller::linear_pi(2, 1.0, 1.0);
    CertificateOptions opt;
    opt.samples = 300;
    std::vector<IssCertificate> certs;
    for (int q = 0; q < 3; ++q) certs.push_back(compute_certificate(g, q, c, opt));
    const SwitchedEnvelope env = switched_envelope(certs, 5.0);
    double a1min = certs[0].alpha1;
    for (const auto& cert : certs) a1min = std::min(a1min, cert.alpha1);
    CHECK(env.alpha1_min == doctest::Approx(a1min));
    CHECK(env.mu >= 1.0);
    CHECK(env.tau_a_star == doctest::Approx(std::log(env.mu) / a1min));
    CHECK(env.dwell_condition == (5.0 > env.tau_a_star));
    CHECK(env.kappa >= 1.0);
}

TEST_CASE("envelope holds on a switched undisturbed run")
{
    const GridModel g = fixtures::two_bus();
    const Controller c = Controller::linear_pi(2, 1.0, 1.0);
    CertificateOptions opt;
    opt.samples = 300;
    std::vector<IssCertificate> certs;
    for (int q = 0; q < 3; ++q) certs.push_back(compute_certificate(g, q, c, opt));
    const Equilibrium eq = solve_equilibrium(g, 1.0);
    InertiaSchedule s;
    s.switch_times = {2.0, 4.0};
    s.modes = {0, 2, 1};
    FixedPolicy policy(c);
    const auto traj = simulate(g, s, {}, policy, perturbed(eq, vec({0.1, -0.1}), vec({0.02, 0.0}), vec({0.0, 0.05})),
                               {6.0, 0.01});
    const std::vector<Controller> pool{c};
    const EnvelopeReport rep = verify_envelope(traj, eq, certs, 2.0, g, &pool);
    CHECK(rep.passed());
    CHECK(rep.descent_checks > 0);
    CHECK(rep.max_descent_excess <= 1e-6);
    CHECK(rep.max_ratio <= 2.0);
}
