#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace flexspar {

/// Flat model parameters or gradients.
using ParamVector = std::vector<double>;

/// Real branches of the Lambert W function.
enum class WBranch {
  principal,  // W0, defined on [-1/e, inf)
  lower,      // W-1, defined on [-1/e, 0)
};

/**
 * \brief Real Lambert W, the inverse of w -> w e^w, on the selected branch.
 *
 * Initial guesses: the branch-point series in p = sqrt(2(e x + 1)) near -1/e,
 * x - x^2 + 1.5 x^3 near zero, Winitzki's log1p approximation for moderate x
 * and L1 - L2 + L2/L1 (L1 = log|x|, L2 = log|L1|) for large x on W0 and small
 * |x| on W-1. Halley's iteration refines the guess.
 *
 * Throws std::domain_error outside the branch domain. Arguments up to a few
 * ulps below -1/e are treated as the branch point itself.
 */
double lambert_w(double x, WBranch branch);

/// log2 of the binomial coefficient C(d, k), summed term by term so that the
/// result carries only rounding error (no Stirling approximation).
/// Throws std::invalid_argument unless d >= 1 and 0 <= k <= d.
double log2_binomial(std::int64_t d, std::int64_t k);

using ScalarLoss = std::function<double(std::span<const double>)>;

/// Component-wise central-difference gradient.
ParamVector finite_diff_grad(const ScalarLoss& loss, std::span<const double> w,
                             double h = 1e-5);

/// Euclidean helpers used throughout the simulator.
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

/**
 * \brief A single-owner pseudo-random stream.
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. Distributions are implemented here rather than taken from
 * <random> because the standard leaves their algorithms unspecified.
 */
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }
  /// Standard normal via Box-Muller (the paired variate is cached).
  double normal();
  /// Exponential with the given mean.
  double exponential(double mean) { return -mean * std::log(uniform_open_zero()); }
  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Master seed from which labelled, independent streams are derived.
struct SeedSpec {
  std::uint64_t master_seed = 0;

  /// Same (master_seed, label) always yields the same stream.
  RandomStream stream(std::string_view label) const;
  std::uint64_t derive(std::string_view label) const;
};

/// Fisher-Yates sample of `count` distinct elements of `population`.
std::vector<std::size_t> sample_without_replacement(std::span<const std::size_t> population,
                                                    std::size_t count, RandomStream& rng);

/// Golden-section minimisation of a unimodal function on [lo, hi].
double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double rel_tol = 1e-12, int max_iter = 500);

}  // namespace flexspar
