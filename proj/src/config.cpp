#include "gridswitch/config.hpp"

namespace gridswitch {

void SwitchConfig::validate() const
{
    if (selection_steps < 1) throw ConfigError("switching.n_s", "must be >= 1");
    if (trial_steps < 1) throw ConfigError("switching.n_t", "must be >= 1");
    if (batch_steps < 1) throw ConfigError("switching.tau", "must be >= 1");
    if (batch_steps > selection_steps) throw ConfigError("switching.tau", "batch length exceeds the selection phase");
    if (!(learning_rate > 0.0)) throw ConfigError("switching.xi", "must be positive");
    if (!(trigger_hz > 0.0)) throw ConfigError("switching.trigger_hz", "must be positive");
}

void TrainConfig::validate() const
{
    if (episodes < 1) throw ConfigError("training.episodes", "must be >= 1");
    if (trajectories < 1) throw ConfigError("training.trajectories", "must be >= 1");
    if (horizon_steps < 1) throw ConfigError("training.horizon_steps", "must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("training.dt", "must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("training.learning_rate", "must be non-negative");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
        throw ConfigError("training.lr_decay_factor", "must lie in (0, 1]");
    if (lr_decay_interval < 1) throw ConfigError("training.lr_decay_interval", "must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("training.lambda", "must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("training.beta1", "must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("training.beta2", "must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("training.adam_epsilon", "must be positive");
    if (!(onset_fraction > 0.0 && onset_fraction <= 1.0))
        throw ConfigError("training.onset_fraction", "must lie in (0, 1]");
    if (hidden_units < 1) throw ConfigError("training.hidden_units", "must be >= 1");
    if (!(integral_gain > 0.0)) throw ConfigError("training.k", "must be positive");
    if (workers < 1) throw ConfigError("training.workers", "must be >= 1");
}

}  // namespace gridswitch
