#pragma once

#include <string>
#include <vector>

#include "gridswitch/config.hpp"
#include "gridswitch/controllers.hpp"
#include "gridswitch/dynamics.hpp"

namespace gridswitch {

/// sum_i c_i u_i^2 / 2 + lambda (||omega||_2 + ||omega||_inf) for one row.
double stage_cost(const Vec& u, const Vec& omega, const Vec& cost, double lambda);
double frequency_cost(const Vec& omega, double lambda);
double control_cost(const Vec& u, const Vec& cost);

/// Mean stage cost over rows [begin, end) of a trajectory.
double window_cost(const Trajectory& traj, const GridModel& model, double lambda, std::size_t begin, std::size_t end);

/// Mean stage cost over every row.
double rollout_loss(const Trajectory& traj, const GridModel& model, double lambda);

/// One rollout of a training batch: start state, inertia mode and disturbance.
struct RolloutSpec {
    GridState initial;
    int mode = 0;
    DisturbanceProfile disturbance;
};

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // same layout as Controller::parameters()
};

class GradientError : public std::runtime_error {
public:
    GradientError(long step, const std::string& what)
        : std::runtime_error("non-finite gradient at step " + std::to_string(step) + ": " + what), step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

/// Mean rollout loss over the batch and its exact reverse-mode derivative
/// through every Euler step, the controller, the integral layer and the
/// saturation. The initial states are constants.
LossGradient loss_and_gradient(const Controller& ctrl, const GridModel& model, const std::vector<RolloutSpec>& batch,
                               int horizon_steps, double dt, double lambda);

/// Mean loss only (forward pass), same conventions.
double batch_loss(const Controller& ctrl, const GridModel& model, const std::vector<RolloutSpec>& batch,
                  int horizon_steps, double dt, double lambda);

/// Central differences with step h on every parameter.
std::vector<double> finite_difference_gradient(const Controller& ctrl, const GridModel& model,
                                               const std::vector<RolloutSpec>& batch, int horizon_steps, double dt,
                                               double lambda, double h = 1e-5);

/// Smallest distance of any pre-saturation action from a bound and of any
/// omega_i from a ReLU kink, over every row of the batch.
double nonsmooth_margin(const Controller& ctrl, const GridModel& model, const std::vector<RolloutSpec>& batch,
                        int horizon_steps, double dt);

class Adam {
public:
    Adam(std::size_t size, double beta1, double beta2, double epsilon);
    /// params -= lr * m_hat / (sqrt(v_hat) + eps) on entries where mask is true.
    void step(std::vector<double>& params, const std::vector<double>& grad, double lr, const std::vector<bool>& mask);
    long iterations() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

struct GradientCheck {
    double max_relative_error = 0.0;
    double margin = 0.0;
    bool passed = false;
};

struct TrainReport {
    std::vector<double> episode_loss;
    std::vector<double> learning_rate;
    Controller controller = Controller::linear_droop(1);
    GradientCheck gradient_check;
    bool aborted = false;
    std::string abort_reason;
    double lambda = 0.0;
    std::string mode_label;

    /// Hash over the loss series and the serialized controller.
    std::string hash() const;
};

/// Mode to train on; `all_modes` samples one uniformly per trajectory.
struct TrainTarget {
    int mode = 0;
    bool all_modes = false;
};

/// Samples one batch of rollouts starting at the controller's equilibrium
/// with a single-bus step disturbance at a random onset step.
std::vector<RolloutSpec> sample_training_batch(const GridModel& model, const Controller& ctrl, const TrainTarget& target,
                                               const TrainConfig& config, double magnitude, Rng& rng);

/// Reverse mode against central differences on two short rollouts.
GradientCheck spot_check_gradient(const Controller& ctrl, const GridModel& model, const TrainTarget& target,
                                  const TrainConfig& config, double disturbance_magnitude);

TrainReport train(const Controller& initial, const GridModel& model, const TrainTarget& target,
                  const TrainConfig& config, double disturbance_magnitude);

/// lr0 * factor^floor(episode / interval).
double scheduled_learning_rate(const TrainConfig& config, int episode);

}  // namespace gridswitch
