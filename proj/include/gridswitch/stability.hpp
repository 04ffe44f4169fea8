#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridswitch/controllers.hpp"
#include "gridswitch/dynamics.hpp"

namespace gridswitch {

class InfeasibleEquilibrium : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Equilibrium {
    Vec delta;
    Vec omega;
    Vec s;
    double gamma = 0.0;
    double k = 1.0;

    GridState state() const { return {delta, omega, s}; }
};

/// gamma = -sum(p) / sum(1/c), k s* = gamma C^{-1} 1, and delta* from damped
/// Newton on p_e(delta) = p + k s* with sum(delta) = 0. Throws
/// InfeasibleEquilibrium if Newton stalls or an edge gap reaches pi/2.
Equilibrium solve_equilibrium(const GridModel& model, double k);

/// x = [delta - delta*, omega, k s - k s*].
Vec error_coordinates(const GridState& state, const Equilibrium& eq);

/// Largest |delta_i - delta_j| over lines.
double max_edge_gap(const Vec& delta, const GridOperators& ops);
bool in_domain(const Vec& delta, const GridOperators& ops, double margin = 0.0);

/// -sum_lines B (cos d_ij - cos d*_ij) - p_e(delta*)^T (delta - delta*).
double potential_energy(const Vec& delta, const Equilibrium& eq, const GridOperators& ops);

struct LyapunovWeights {
    double eps1 = 0.0;
    double eps2 = 0.0;
};

struct LyapunovValue {
    double value = 0.0;
    bool in_domain = true;
};

LyapunovValue lyapunov_value(const GridState& state, const Equilibrium& eq, const GridModel& model, int mode,
                             const LyapunovWeights& w);

/// Gradient of V with respect to (delta, omega, s).
GridState lyapunov_gradient(const GridState& state, const Equilibrium& eq, const GridModel& model, int mode,
                            const LyapunovWeights& w);

/// Closed-loop vector field (saturation included) with disturbance dd.
GridState closed_loop_rate(const GridState& state, const Controller& ctrl, const Vec& dd, int mode,
                           const GridModel& model, const GridOperators& ops);

/// dV/dt along the closed-loop vector field.
double lie_derivative(const GridState& state, const Controller& ctrl, const Vec& dd, const Equilibrium& eq,
                      const GridModel& model, int mode, const LyapunovWeights& w);

/// Q(delta, K) in the coordinates z = (p_e - p_e*, omega, k s - k s*), K = diag(kdiag).
Mat q_matrix(const Vec& delta, const Vec& kdiag, const GridModel& model, int mode, double k,
             const LyapunovWeights& w, const GridOperators& ops);

struct CertificateOptions {
    int samples = 2000;
    std::uint64_t seed = 0;
    double initial_epsilon = 1e-2;
    int max_halvings = 30;
    double margin = 0.05;  // edge gaps sampled within pi/2 - margin
};

/// Sampled Exp-ISS certificate of one controller in one inertia mode.
struct IssCertificate {
    int mode = 0;
    double k = 1.0;
    double epsilon1 = 0.0, epsilon2 = 0.0;
    double eta1 = 0.0, eta2 = 0.0;
    double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
    double alpha1 = 0.0, alpha2 = 0.0;
    double kappa = 0.0, rho = 1.0, beta = 0.0;
    double min_eigenvalue = 0.0;
    double max_slope = 0.0;
    int samples = 0;
    int halvings = 0;
    std::uint64_t seed = 0;
    bool certified = false;
    std::string failure;

    LyapunovWeights weights() const { return {epsilon1, epsilon2}; }
};

IssCertificate compute_certificate(const GridModel& model, int mode, const Controller& ctrl,
                                   const CertificateOptions& options);

/// One `key value` per line, labelled as sampled.
std::string certificate_to_text(const IssCertificate& cert);

/// Random zero-sum angle vector inside D: a ray from delta* in a random
/// direction, scaled to a uniform fraction of the distance to the boundary.
Vec sample_domain_angles(const Equilibrium& eq, const GridOperators& ops, double margin, Rng& rng,
                         bool on_boundary = false);

struct SandwichReport {
    int samples = 0;
    int violations = 0;
    double min_lower_ratio = std::numeric_limits<double>::infinity();  // V / (a1 |x|^2)
    double max_upper_ratio = 0.0;                                       // V / (a2 |x|^2)
};

SandwichReport check_sandwich(const IssCertificate& cert, const GridModel& model, int samples, std::uint64_t seed,
                              double margin = 0.05);

/// Constants of the switched system from per-mode certificates and an average dwell time.
struct SwitchedEnvelope {
    double kappa = 0.0, rho = 1.0, beta = 0.0;
    double mu = 1.0;
    double alpha1_min = 0.0;
    double tau_a = 0.0;
    double tau_a_star = 0.0;  // ln(mu) / alpha1_min
    bool dwell_condition = false;
};

SwitchedEnvelope switched_envelope(const std::vector<IssCertificate>& certs, double tau_a);

struct Violation {
    double t = 0.0;
    std::string what;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct EnvelopeReport {
    SwitchedEnvelope envelope;
    double slack = 2.0;
    double max_ratio = 0.0;  // max ||x|| / bound
    int controller_switches = 0;
    double max_switch_jump = 0.0;
    int descent_checks = 0;
    double max_descent_excess = -std::numeric_limits<double>::infinity();
    std::vector<Violation> violations;

    bool passed() const { return violations.empty(); }
};

/// Checks ||x(t)|| <= slack (kappa* rho*^t ||x0|| + beta* sup ||dd||_2) on every
/// row, V continuity at controller switches and, when a pool is given, the Lie
/// derivative bound V' <= -alpha1 V + tol on disturbance-free rows.
EnvelopeReport verify_envelope(const Trajectory& traj, const Equilibrium& eq, const std::vector<IssCertificate>& certs,
                               double dwell_s, const GridModel& model, const std::vector<Controller>* pool = nullptr,
                               double slack = 2.0, double descent_tol = 1e-6);

struct DwellStats {
    int switches = 0;           // mode changes on [0, T)
    std::vector<double> times;  // when they happen
    double n0 = 1.0;
    double tau_a = std::numeric_limits<double>::infinity();  // largest tau_a with N <= n0 + len / tau_a
};

DwellStats dwell_time_stats(const InertiaSchedule& schedule, double horizon_s, double n0 = 1.0);

/// N(t1, t2): mode changes in [t1, t2).
int switch_count(const InertiaSchedule& schedule, double t1, double t2);

}  // namespace gridswitch
