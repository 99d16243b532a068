#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace flexspar {

struct RoundTrace;

/// sqrt((1/M) sum delta_m^2). Throws std::invalid_argument on an empty series
/// or any delta < 1.
double rms_delta(std::span<const double> deltas);

/// Inputs of the convergence bound for the compressed local-SGD engine.
struct BoundInputs {
  double theta = 0.0;
  double M = 1.0;
  double T = 1.0;
  double L = 0.0;
  double sigma = 0.0;
  double G = 0.0;
  double H = 1.0;
  double rho = 1.0;
  double b0 = 1.0;
  double f0_gap = 0.0;  // E[F(w0)] - F*, or an upper bound on it
  std::vector<double> deltas;
};

struct BoundValue {
  double value = 0.0;
  double init_term = 0.0;      // 4 gap / (theta sqrt(MT))
  double variance_term = 0.0;  // 8 rho theta L sigma^2 / ((rho-1) b0 sqrt(M) T^1.5)
  double drift_term = 0.0;     // (4 delta^2 + 1) 8 M theta^2 L^2 G^2 H^2 / T
  bool premise_ok = true;      // theta sqrt(M) / sqrt(T) <= 1 / (2L)
  std::vector<std::string> warnings;
};

/// Right-hand side of the average squared gradient-norm bound. A violated
/// step-size premise or rho <= 1 is reported in `warnings`, never thrown.
BoundValue theorem1_rhs(const BoundInputs& in);

/// Constants of the round-count estimate.
struct RoundsConstants {
  double b0 = 1.0;
  double M = 1.0;
  double L = 1.0;
  double G = 1.0;
  double J = 1.0;
  double sigma = 1.0;
  double epsilon = 1e-3;
};

struct RoundsEstimate {
  double T = 0.0;  // iterations to reach epsilon
  double K = 0.0;  // rounds, K = T / H
  /// The two leading terms of K with unit constants: M H delta^2 and 1/(sqrt(M) H).
  double lead_sparsity = 0.0;
  double lead_period = 0.0;
};

/// Full closed form of T(delta, H) and K(delta, H) including the square-root term.
RoundsEstimate rounds_K(double delta, double H, const RoundsConstants& c);

struct BoundReport {
  std::string check = "empirical-constants";
  double measured = 0.0;  // (1/MT) sum_t sum_m ||grad f_m(w_m^t)||^2
  BoundValue rhs;
  bool evaluated = false;  // false when the premise gate blocked the comparison
  bool holds = false;

  nlohmann::json to_json() const;
};

/// Compares the measured mean squared local-gradient norm of a finished run
/// against theorem1_rhs. When the step-size premise fails the report flags it
/// and does not assert the bound.
BoundReport verify_bound_on_run(std::span<const RoundTrace> trace, const BoundInputs& in);

}  // namespace flexspar
