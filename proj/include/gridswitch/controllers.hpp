#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gridswitch/grid_model.hpp"
#include "gridswitch/monotone_relu.hpp"

namespace gridswitch {

enum class ControllerKind { NeuralPI, LinearDroop, LinearPI, LyapunovNN, NNPI };

std::string to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& text);

/// Monotone networks, one per bus or a single shared one.
struct MonotoneBank {
    std::vector<MonotoneStackedReLU> nets;
};

/// pi_i(x) = K_i x with K_i >= 0.
struct LinearBank {
    Vec gains;
};

/// Unconstrained tanh layer per bus, offset so that pi_i(0) = 0:
/// pi_i(x) = f_i(x) - f_i(0), f_i(x) = sum_h a_h tanh(w_h x + b_h).
struct DenseBank {
    int hidden = 20;
    std::vector<double> params;  // per bus: [w (h), b (h), a (h)]
};

using ProportionalBank = std::variant<MonotoneBank, LinearBank, DenseBank>;

/// u = clamp(-pi(omega) + k s). Parameter vector layout: proportional
/// parameters in bus order, then k when the controller has an integral term.
class Controller {
public:
    static Controller neural_pi(int n, int hidden, double k, bool shared = false);
    static Controller neural_pi_random(int n, int hidden, double k, Rng& rng, bool shared = false);
    static Controller lyapunov_nn(int n, int hidden, Rng& rng);
    static Controller linear_droop(int n, double gain = 1.0);
    static Controller linear_pi(int n, double gain = 1.0, double k = 1.0);
    static Controller nn_pi(int n, int hidden, double k, Rng& rng);

    ControllerKind kind() const { return kind_; }
    int n() const { return n_; }
    bool has_integral() const { return kind_ == ControllerKind::NeuralPI || kind_ == ControllerKind::LinearPI || kind_ == ControllerKind::NNPI; }
    double integral_gain() const { return k_; }
    void set_integral_gain(double k);

    const std::string& trained_mode() const { return trained_mode_; }
    void set_trained_mode(std::string label) { trained_mode_ = std::move(label); }

    /// pi_i(x) for bus i.
    double proportional(int bus, double x) const;
    /// Right derivative of pi_i at x.
    double proportional_slope(int bus, double x) const;
    /// Unclamped -pi(omega) + k s.
    Vec raw_action(const Vec& omega, const Vec& s) const;
    Vec action(const Vec& omega, const Vec& s, const GridModel& model) const;

    std::size_t parameter_count() const;
    std::size_t proportional_parameter_count() const;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> params);

    /// grad[proportional slice] += upstream * d pi_bus(x) / d params.
    void accumulate_proportional_gradient(int bus, double x, double upstream, std::span<double> grad) const;

    /// Keeps linear gains non-negative and k positive. Monotone networks need
    /// nothing here since their raw form is always feasible.
    void project();

    /// Largest and smallest slope of any pi_i over the real line.
    /// Only defined for monotone and linear banks.
    double max_slope() const;
    double min_slope() const;

    /// Monotone branches satisfy their constraints; gains non-negative; k > 0.
    bool feasible() const;

    const ProportionalBank& bank() const { return bank_; }

    bool operator==(const Controller& o) const;

private:
    Controller(ControllerKind kind, int n, ProportionalBank bank, double k);

    ControllerKind kind_;
    int n_;
    ProportionalBank bank_;
    double k_ = 0.0;
    std::string trained_mode_ = "none";
};

constexpr double kMinIntegralGain = 1e-3;

/// Versioned text with raw parameters, k, trained mode and an FNV-1a hash.
std::string serialize_controller(const Controller& c);
Controller deserialize_controller(const std::string& text);
void save_controller(const Controller& c, const std::filesystem::path& path);
Controller load_controller(const std::filesystem::path& path);

/// Rejects pools with mixed bus counts or, among integral controllers, differing k.
void validate_pool(const std::vector<Controller>& pool);

}  // namespace gridswitch
