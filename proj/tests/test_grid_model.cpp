#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "fixtures.hpp"
#include "gridswitch/scenario.hpp"

using namespace gridswitch;
using fixtures::vec;

TEST_CASE("incidence of a single edge")
{
    const Mat E = incidence_matrix(fixtures::two_bus());
    REQUIRE(E.rows() == 2);
    REQUIRE(E.cols() == 1);
    CHECK(E(0, 0) == 1.0);
    CHECK(E(1, 0) == -1.0);
}

TEST_CASE("incidence of the triangle has one +1, one -1 and one 0 per column")
{
    const Mat E = incidence_matrix(fixtures::triangle());
    for (Eigen::Index j = 0; j < E.cols(); ++j) {
        int plus = 0, minus = 0, zero = 0;
        for (Eigen::Index i = 0; i < E.rows(); ++i) {
            plus += E(i, j) == 1.0;
            minus += E(i, j) == -1.0;
            zero += E(i, j) == 0.0;
        }
        CHECK(plus == 1);
        CHECK(minus == 1);
        CHECK(zero == 1);
    }
}

TEST_CASE("nine-bus incidence columns sum to zero")
{
    const Scenario sc = load_scenario(GRIDSWITCH_DATA_DIR "/nine_bus.cfg");
    const Mat E = incidence_matrix(sc.grid);
    CHECK(E.colwise().sum().cwiseAbs().maxCoeff() == 0.0);
    CHECK(E.rows() == 9);
}

TEST_CASE("weighted laplacian is E diag(B) E^T")
{
    const GridModel g = fixtures::triangle();
    const Mat E = incidence_matrix(g);
    Vec B(3);
    B << 1.5, 1.2, 1.0;
    const Mat expected = E * B.asDiagonal() * E.transpose();
    CHECK((weighted_laplacian(g) - expected).norm() < 1e-15);
    CHECK((communication_laplacian(g) - E * E.transpose()).norm() < 1e-15);
}

TEST_CASE("model validation")
{
    SUBCASE("valid two-bus model")
    {
        CHECK_NOTHROW(fixtures::two_bus().validate());
    }
    SUBCASE("zero inertia")
    {
        GridModel g = fixtures::two_bus();
        g.inertia[0](0) = 0.0;
        CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("non-positive inertia"), ModelError);
    }
    SUBCASE("disconnected graph")
    {
        GridModel g = fixtures::triangle();
        g.lines = {{0, 1, 1.0}};
        CHECK_THROWS_AS(g.validate(), ModelError);
    }
    SUBCASE("action bounds must straddle zero")
    {
        GridModel g = fixtures::two_bus();
        g.u_lower(1) = 0.1;
        CHECK_THROWS_AS(g.validate(), ModelError);
    }
    SUBCASE("non-positive damping")
    {
        GridModel g = fixtures::two_bus();
        g.damping(0) = -1.0;
        CHECK_THROWS_AS(g.validate(), ModelError);
    }
}

TEST_CASE("fixed dwell schedule over 20 s has four intervals")
{
    const auto chain = InertiaChain::standard_three_mode();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = sample_inertia_schedule(seed, 20.0, 5.0, chain);
        REQUIRE(s.interval_count() == 4);
        CHECK(s.switch_times == std::vector<double>{5.0, 10.0, 15.0});
        CHECK_NOTHROW(s.validate(3));
    }
}

TEST_CASE("schedule is right continuous")
{
    InertiaSchedule s;
    s.switch_times = {5.0};
    s.modes = {2, 0};
    CHECK(s.mode_at(4.999) == 2);
    CHECK(s.mode_at(5.0) == 0);
}

TEST_CASE("standard chain rows are stochastic")
{
    const auto chain = InertiaChain::standard_three_mode();
    CHECK_NOTHROW(chain.validate());
    for (int i = 0; i < 3; ++i) CHECK(std::abs(chain.transition.row(i).sum() - 1.0) < 1e-12);
    CHECK(chain.transition(0, 0) == 0.5);
    CHECK(chain.transition(1, 0) == 0.3);
    CHECK(chain.transition(2, 2) == 0.5);
    CHECK(chain.initial == std::vector<double>{0.10, 0.45, 0.45});
}

TEST_CASE("empirical occupation matches the stationary distribution")
{
    const auto chain = InertiaChain::standard_three_mode();
    // Left eigenvector of the transition matrix for eigenvalue 1.
    Eigen::EigenSolver<Mat> es(chain.transition.transpose());
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < 3; ++i)
        if (std::abs(es.eigenvalues()(i) - 1.0) < std::abs(es.eigenvalues()(best) - 1.0)) best = i;
    Vec pi = es.eigenvectors().col(best).real();
    pi /= pi.sum();

    const auto s = sample_inertia_schedule(42, 5.0 * 100001, 5.0, chain);
    REQUIRE(s.interval_count() >= 100000);
    Vec counts = Vec::Zero(3);
    for (int q : s.modes) counts(q) += 1.0;
    counts /= counts.sum();
    for (int i = 0; i < 3; ++i) CHECK(std::abs(counts(i) - pi(i)) < 0.01);
}

TEST_CASE("randomized dwell stays within half and one and a half dwell")
{
    const auto s = sample_inertia_schedule(3, 1000.0, 5.0, InertiaChain::standard_three_mode(), true);
    double prev = 0.0;
    for (double t : s.switch_times) {
        CHECK(t - prev >= 2.5 - 1e-12);
        CHECK(t - prev <= 7.5 + 1e-12);
        prev = t;
    }
}

TEST_CASE("disturbance profile keeps the latest event")
{
    DisturbanceProfile p;
    p.events = {{0.1, vec({0.3, 0.0})}, {7.0, vec({0.0, -0.2})}};
    CHECK(p.value_at(0.05, 2).isZero());
    CHECK(p.value_at(0.1, 2) == vec({0.3, 0.0}));
    CHECK(p.value_at(6.99, 2) == vec({0.3, 0.0}));
    CHECK(p.value_at(7.0, 2) == vec({0.0, -0.2}));
    CHECK(p.sup_inf_norm() == doctest::Approx(0.3));
}

TEST_CASE("sampled disturbance steps hit one bus within the magnitude")
{
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const Vec d = sample_disturbance_step(rng, 5, 0.3);
        int nonzero = 0;
        for (Eigen::Index j = 0; j < 5; ++j) nonzero += d(j) != 0.0;
        CHECK(nonzero <= 1);
        CHECK(d.lpNorm<Eigen::Infinity>() <= 0.3);
    }
}
