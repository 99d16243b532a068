#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flexspar/numerics.hpp"

namespace flexspar {

enum class LossKind { least_squares, logistic, mlp1 };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Width of the hidden layer of the mlp1 model.
inline constexpr std::size_t kMlpHidden = 8;

/// Smooth loss models over a feature dimension.
///  - least_squares: 1/(2b) sum (<x, w> - y)^2
///  - logistic: mean softplus(-s <x, w>), s = 2y - 1, labels in {0, 1}
///  - mlp1: logistic loss on v . tanh(W x + c) + b0 (tanh keeps it L-smooth)
struct LossModel {
  LossKind kind = LossKind::least_squares;
  std::size_t feature_dim = 0;

  std::size_t param_dim() const;
  bool is_classifier() const { return kind != LossKind::least_squares; }
};

/// Row-major samples with a planted generating parameter.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;  // size() * dim
  std::vector<double> labels;
  ParamVector planted;            // generating model (may be empty after import)

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
};

struct SyntheticOptions {
  /// least_squares: Gaussian label noise std. classifiers: label flip probability.
  double noise = 0.0;
};

/// Deterministic synthetic task: features ~ N(0, I), labels from a planted model.
Dataset make_synthetic(const LossModel& model, std::size_t n_samples, const SeedSpec& seed,
                       const SyntheticOptions& options = {});

/// M disjoint shards covering every sample index.
struct Partition {
  std::vector<std::vector<std::size_t>> shards;
  double skew = 0.0;

  std::size_t num_shards() const { return shards.size(); }
};

/// skew = 0 deals a uniform shuffle into contiguous shards; skew = 1 deals the
/// label-sorted order; values in between blend the two sort keys linearly.
/// Shard sizes differ by at most one. Throws std::invalid_argument if M == 0,
/// M > n or skew is outside [0, 1].
Partition partition(const Dataset& ds, std::size_t num_shards, double skew, const SeedSpec& seed);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mini-batch average loss and its exact gradient.
LossGrad loss_and_grad(const LossModel& model, std::span<const double> w,
                       std::span<const std::size_t> batch, const Dataset& ds);

double batch_loss(const LossModel& model, std::span<const double> w,
                  std::span<const std::size_t> batch, const Dataset& ds);

/// F(w) = (1/M) sum_m f_m(w), each shard weighted uniformly.
double global_loss(const LossModel& model, std::span<const double> w, const Dataset& ds,
                   const Partition& part);

/// Fraction of samples classified correctly (classifiers only).
double accuracy(const LossModel& model, std::span<const double> w, const Dataset& ds);

/// Lower bound on min_w F(w): exact for least_squares, 0 for the classifiers.
double optimal_loss_lower_bound(const LossModel& model, const Dataset& ds, const Partition& part);

struct ProblemConstants {
  double L = 0.0;      // smoothness
  double sigma = 0.0;  // per-sample gradient standard deviation bound
  double G = 0.0;      // per-sample gradient second-moment bound
};

struct ConstantsProbe {
  std::size_t probe_count = 100;
  /// Points at which sigma and G are measured. Empty: probe_count random points.
  std::vector<ParamVector> points;
};

/**
 * Empirical smoothness and gradient-moment constants.
 *
 * L: for least_squares, the largest eigenvalue over shards of X_m^T X_m / n_m
 * by power iteration; otherwise the largest observed
 * ||grad f_m(w) - grad f_m(w')|| / ||w - w'|| over probe pairs.
 *
 * sigma^2, G^2: at each probe point and shard, the exact single-sample
 * expectations mean_i ||g_i - grad f_m||^2 and mean_i ||g_i||^2; the maximum
 * over points and shards is reported. G is raised to sigma if needed.
 * These are trajectory-local estimates, not global suprema.
 */
ProblemConstants estimate_constants(const LossModel& model, const Dataset& ds,
                                    const Partition& part, const ConstantsProbe& probe,
                                    const SeedSpec& seed);

/// CSV with one sample per row and the label in the last column.
void write_csv(std::ostream& out, const Dataset& ds);
Dataset read_csv(std::istream& in);

}  // namespace flexspar
