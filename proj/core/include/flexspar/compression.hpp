#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flexspar/numerics.hpp"

namespace flexspar {

/// Gradient sparsity delta = d / k. The transmitted support size is
/// k = clamp(round(d / delta), 1, d).
class SparsityLevel {
 public:
  SparsityLevel(double delta, std::size_t dim);

  static SparsityLevel from_k(std::size_t k, std::size_t dim);

  double delta() const { return delta_; }
  std::size_t dim() const { return dim_; }
  std::size_t k() const { return k_; }
  /// d / k after rounding; the sparsity the operator actually applies.
  double effective_delta() const { return static_cast<double>(dim_) / static_cast<double>(k_); }

 private:
  double delta_;
  std::size_t dim_;
  std::size_t k_;
};

struct PayloadSize {
  double bits_values = 0.0;
  double bits_positions = 0.0;
  double bits_total = 0.0;  // s1 * (values + positions) + s0
};

/// Keeps the k largest-magnitude entries of x and zeroes the rest. Ties on
/// |x_i| keep the lower index. Throws std::invalid_argument unless 1 <= k <= d.
ParamVector top_k(std::span<const double> x, std::size_t k);

/// Indices retained by top_k, ascending.
std::vector<std::size_t> top_k_support(std::span<const double> x, std::size_t k);

/// Per-round upload size with exact position coding: (fpp + 1) bits per value
/// plus log2 C(d, k) bits for the support.
PayloadSize payload_exact(const SparsityLevel& level, int fpp, double s0, double s1);

/// Stirling form of the upload size, s1 * (d / delta) * (log2 delta + fpp + 1) + s0,
/// evaluated at the level's effective delta d / k.
double payload_approx(const SparsityLevel& level, int fpp, double s0, double s1);

/// Same as payload_approx but directly on (delta, d); used by the optimiser.
double payload_approx(double delta, std::size_t dim, int fpp, double s0, double s1);

}  // namespace flexspar
