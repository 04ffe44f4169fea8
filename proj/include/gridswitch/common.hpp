#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace gridswitch {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Derives an independent 64-bit seed for a sub-stream (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);
std::string format_vector(const Vec& v, char sep = ' ');
std::string format_list(const std::vector<double>& v, char sep = ' ');

/// Strict parse; throws std::invalid_argument on trailing garbage.
double parse_double(std::string_view text);
long parse_int(std::string_view text);
std::vector<double> parse_list(std::string_view text);

/// FNV-1a 64-bit hash, hex encoded.
std::string content_hash(std::string_view text);

double softplus(double x);
double sigmoid(double x);
double inverse_softplus(double y);

}  // namespace gridswitch
