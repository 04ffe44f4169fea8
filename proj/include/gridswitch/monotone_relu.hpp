#pragma once

#include <span>
#include <vector>

#include "gridswitch/common.hpp"

namespace gridswitch {

/// Scalar monotone stacked-ReLU network pi(x) = pi_plus(x) + pi_minus(x) with
///
///   pi_plus(x)  = sum_l w+_l ReLU( x + b+_l)
///   pi_minus(x) = sum_l w-_l ReLU(-x + b-_l)
///
/// where every partial sum of w+ is positive, every partial sum of w- is
/// negative, b_1 = 0 and the biases are non-increasing. The network is stored
/// in unconstrained raw form; the constrained weights are materialized from it:
///
///   partial slope S+_l = kMinSlope + softplus(r+_l),  w+_1 = S+_1, w+_l = S+_l - S+_{l-1}
///   b+_l = b+_{l-1} - kGapScale * softplus(g+_l)
///
/// and mirrored for the negative branch (S-_l = -(kMinSlope + softplus(r-_l))).
/// Raw layout: [r+ (d), g+ (d-1), r- (d), g- (d-1)].
class MonotoneStackedReLU {
public:
    static constexpr double kMinSlope = 1e-6;
    static constexpr double kGapScale = 0.01;

    explicit MonotoneStackedReLU(int hidden = 20);

    /// Raw parameters drawn from N(mean, stddev).
    static MonotoneStackedReLU random(int hidden, Rng& rng, double slope_mean, double stddev);

    /// Builds the raw form from constrained weights; throws std::invalid_argument
    /// if the weights violate the monotonicity constraints.
    static MonotoneStackedReLU from_weights(const Vec& w_pos, const Vec& b_pos, const Vec& w_neg, const Vec& b_neg);

    static std::size_t raw_size(int hidden) { return static_cast<std::size_t>(4 * hidden - 2); }

    int hidden() const { return hidden_; }
    std::span<const double> raw() const { return raw_; }
    void set_raw(std::span<const double> raw);

    double operator()(double x) const;
    /// Right derivative d pi / dx.
    double slope(double x) const;
    /// pi(x) / x, or the slope at 0 when x == 0.
    double secant(double x) const;
    double max_slope() const;
    double min_slope() const;

    /// Distance from x to the nearest kink (x = -b+_l or x = b-_l).
    double kink_distance(double x) const;

    /// raw_grad += upstream * d pi(x) / d raw.
    void accumulate_gradient(double x, double upstream, std::span<double> raw_grad) const;

    const Vec& w_pos() const { return w_pos_; }
    const Vec& b_pos() const { return b_pos_; }
    const Vec& w_neg() const { return w_neg_; }
    const Vec& b_neg() const { return b_neg_; }

    /// True when all constraints hold on the materialized weights.
    bool feasible() const;

private:
    void materialize();

    int hidden_;
    std::vector<double> raw_;
    Vec w_pos_, b_pos_, w_neg_, b_neg_;
    Vec s_pos_, s_neg_;  // partial slopes
};

}  // namespace gridswitch
