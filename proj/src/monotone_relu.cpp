#include "gridswitch/monotone_relu.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridswitch {

MonotoneStackedReLU::MonotoneStackedReLU(int hidden) : hidden_(hidden), raw_(raw_size(hidden), 0.0)
{
    if (hidden < 1) throw std::invalid_argument("MonotoneStackedReLU: hidden units must be >= 1");
    materialize();
}

MonotoneStackedReLU MonotoneStackedReLU::random(int hidden, Rng& rng, double slope_mean, double stddev)
{
    MonotoneStackedReLU net(hidden);
    std::normal_distribution<double> noise(0.0, stddev);
    const int d = hidden;
    for (int l = 0; l < d; ++l) {
        net.raw_[static_cast<std::size_t>(l)] = slope_mean + noise(rng);
        net.raw_[static_cast<std::size_t>(2 * d - 1 + l)] = slope_mean + noise(rng);
    }
    for (int l = 0; l + 1 < d; ++l) {
        net.raw_[static_cast<std::size_t>(d + l)] = noise(rng);
        net.raw_[static_cast<std::size_t>(3 * d - 1 + l)] = noise(rng);
    }
    net.materialize();
    return net;
}

MonotoneStackedReLU MonotoneStackedReLU::from_weights(const Vec& w_pos, const Vec& b_pos, const Vec& w_neg,
                                                      const Vec& b_neg)
{
    const auto d = w_pos.size();
    if (d < 1 || b_pos.size() != d || w_neg.size() != d || b_neg.size() != d)
        throw std::invalid_argument("from_weights: inconsistent sizes");
    if (b_pos[0] != 0.0 || b_neg[0] != 0.0) throw std::invalid_argument("from_weights: first bias must be zero");
    MonotoneStackedReLU net(static_cast<int>(d));
    double sp = 0.0, sn = 0.0;
    for (Eigen::Index l = 0; l < d; ++l) {
        sp += w_pos[l];
        sn += w_neg[l];
        if (!(sp > kMinSlope) || !(-sn > kMinSlope))
            throw std::invalid_argument("from_weights: partial sums violate the sign constraint");
        net.raw_[static_cast<std::size_t>(l)] = inverse_softplus(sp - kMinSlope);
        net.raw_[static_cast<std::size_t>(2 * d - 1 + l)] = inverse_softplus(-sn - kMinSlope);
        if (l > 0) {
            const double gp = (b_pos[l - 1] - b_pos[l]) / kGapScale;
            const double gn = (b_neg[l - 1] - b_neg[l]) / kGapScale;
            if (!(gp > 0.0) || !(gn > 0.0)) throw std::invalid_argument("from_weights: biases must strictly decrease");
            net.raw_[static_cast<std::size_t>(d + l - 1)] = inverse_softplus(gp);
            net.raw_[static_cast<std::size_t>(3 * d - 1 + l - 1)] = inverse_softplus(gn);
        }
    }
    net.materialize();
    return net;
}

void MonotoneStackedReLU::set_raw(std::span<const double> raw)
{
    if (raw.size() != raw_.size()) throw std::invalid_argument("MonotoneStackedReLU: raw size mismatch");
    std::copy(raw.begin(), raw.end(), raw_.begin());
    materialize();
}

void MonotoneStackedReLU::materialize()
{
    const int d = hidden_;
    s_pos_.resize(d);
    s_neg_.resize(d);
    w_pos_.resize(d);
    w_neg_.resize(d);
    b_pos_.resize(d);
    b_neg_.resize(d);
    for (int l = 0; l < d; ++l) {
        s_pos_[l] = kMinSlope + softplus(raw_[static_cast<std::size_t>(l)]);
        s_neg_[l] = -(kMinSlope + softplus(raw_[static_cast<std::size_t>(2 * d - 1 + l)]));
        w_pos_[l] = l == 0 ? s_pos_[0] : s_pos_[l] - s_pos_[l - 1];
        w_neg_[l] = l == 0 ? s_neg_[0] : s_neg_[l] - s_neg_[l - 1];
        if (l == 0) {
            b_pos_[0] = 0.0;
            b_neg_[0] = 0.0;
        } else {
            b_pos_[l] = b_pos_[l - 1] - kGapScale * softplus(raw_[static_cast<std::size_t>(d + l - 1)]);
            b_neg_[l] = b_neg_[l - 1] - kGapScale * softplus(raw_[static_cast<std::size_t>(3 * d - 1 + l - 1)]);
        }
    }
}

double MonotoneStackedReLU::operator()(double x) const
{
    double y = 0.0;
    for (int l = 0; l < hidden_; ++l) {
        y += w_pos_[l] * std::max(0.0, x + b_pos_[l]);
        y += w_neg_[l] * std::max(0.0, -x + b_neg_[l]);
    }
    return y;
}

double MonotoneStackedReLU::slope(double x) const
{
    double g = 0.0;
    for (int l = 0; l < hidden_; ++l) {
        if (x + b_pos_[l] >= 0.0) g += w_pos_[l];
        if (-x + b_neg_[l] > 0.0) g -= w_neg_[l];
    }
    return g;
}

double MonotoneStackedReLU::secant(double x) const
{
    return x == 0.0 ? slope(0.0) : (*this)(x) / x;
}

double MonotoneStackedReLU::max_slope() const
{
    return std::max(s_pos_.maxCoeff(), (-s_neg_).maxCoeff());
}

double MonotoneStackedReLU::min_slope() const
{
    return std::min(s_pos_.minCoeff(), (-s_neg_).minCoeff());
}

double MonotoneStackedReLU::kink_distance(double x) const
{
    double dist = std::numeric_limits<double>::infinity();
    for (int l = 0; l < hidden_; ++l) {
        dist = std::min(dist, std::abs(x + b_pos_[l]));
        dist = std::min(dist, std::abs(-x + b_neg_[l]));
    }
    return dist;
}

void MonotoneStackedReLU::accumulate_gradient(double x, double upstream, std::span<double> raw_grad) const
{
    if (raw_grad.size() != raw_.size()) throw std::invalid_argument("accumulate_gradient: size mismatch");
    if (upstream == 0.0) return;
    const int d = hidden_;
    // Gradients with respect to the materialized weights and biases.
    Vec gw_pos(d), gw_neg(d), gb_pos(d), gb_neg(d);
    for (int l = 0; l < d; ++l) {
        const double zp = x + b_pos_[l];
        const double zn = -x + b_neg_[l];
        gw_pos[l] = std::max(0.0, zp);
        gw_neg[l] = std::max(0.0, zn);
        gb_pos[l] = zp > 0.0 ? w_pos_[l] : 0.0;
        gb_neg[l] = zn > 0.0 ? w_neg_[l] : 0.0;
    }
    // Partial slopes: w_l = S_l - S_{l-1}.
    for (int l = 0; l < d; ++l) {
        const double gs_pos = gw_pos[l] - (l + 1 < d ? gw_pos[l + 1] : 0.0);
        const double gs_neg = gw_neg[l] - (l + 1 < d ? gw_neg[l + 1] : 0.0);
        raw_grad[static_cast<std::size_t>(l)] += upstream * gs_pos * sigmoid(raw_[static_cast<std::size_t>(l)]);
        raw_grad[static_cast<std::size_t>(2 * d - 1 + l)] -=
            upstream * gs_neg * sigmoid(raw_[static_cast<std::size_t>(2 * d - 1 + l)]);
    }
    // Biases: b_l = -gap * sum_{k<=l} softplus(g_k); suffix sums of bias gradients.
    double tail_pos = 0.0, tail_neg = 0.0;
    for (int l = d - 1; l >= 1; --l) {
        tail_pos += gb_pos[l];
        tail_neg += gb_neg[l];
        const auto ip = static_cast<std::size_t>(d + l - 1);
        const auto in = static_cast<std::size_t>(3 * d - 1 + l - 1);
        raw_grad[ip] -= upstream * kGapScale * sigmoid(raw_[ip]) * tail_pos;
        raw_grad[in] -= upstream * kGapScale * sigmoid(raw_[in]) * tail_neg;
    }
}

bool MonotoneStackedReLU::feasible() const
{
    double sp = 0.0, sn = 0.0;
    for (int l = 0; l < hidden_; ++l) {
        sp += w_pos_[l];
        sn += w_neg_[l];
        if (!(sp > 0.0) || !(sn < 0.0)) return false;
        if (l > 0 && (b_pos_[l] > b_pos_[l - 1] || b_neg_[l] > b_neg_[l - 1])) return false;
    }
    return b_pos_[0] == 0.0 && b_neg_[0] == 0.0;
}

}  // namespace gridswitch
