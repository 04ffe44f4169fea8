#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gridswitch {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Event-triggered switching hyperparameters. Steps are simulator steps.
struct SwitchConfig {
    int selection_steps = 50;   // n_s
    int trial_steps = 300;      // n_t
    double learning_rate = 5e-3;  // ξ
    int batch_steps = 5;        // τ
    double trigger_hz = 0.01;
    bool reset_bandit = false;  // fresh accumulated costs on every trigger

    void validate() const;
    int batch_count() const { return (selection_steps + batch_steps - 1) / batch_steps; }
    bool operator==(const SwitchConfig&) const = default;
};

/// Rollout training hyperparameters.
struct TrainConfig {
    int episodes = 300;
    int trajectories = 300;
    int horizon_steps = 300;
    double dt = 0.01;
    double learning_rate = 0.05;
    double lr_decay_factor = 0.7;
    int lr_decay_interval = 50;
    double lambda = 10.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    /// Disturbance onset is drawn uniformly from the first `onset_fraction` of the horizon.
    double onset_fraction = 1.0;
    int hidden_units = 20;
    double integral_gain = 1.0;
    bool learn_integral_gain = false;
    bool shared_network = false;
    int workers = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

}  // namespace gridswitch
