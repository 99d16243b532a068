#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexspar/energy.hpp"

namespace flexspar {

// The optimiser works on the Stirling-approximated objective
//   Gamma(delta, H) = Gamma1(delta, H) * Gamma2(delta, H)
//   Gamma1 = sum_m (c_alpha H delta_m^2 + c_beta / (M^{3/2} H))
//   Gamma2 = sum_m (C_m (log2 delta_m + kappa) / delta_m + P_m s0 / R_m + E_m H)
// with C_m = P_m s1 d / R_m, kappa = fpp + 1 and E_m the per-iteration compute energy.

double gamma1(std::span<const double> deltas, int H, const EnergyModel& em);
double gamma2(std::span<const double> deltas, int H, const EnergyModel& em);

/// Gamma1 * Gamma2; equals total_energy_objective with the approximate payload.
double objective(std::span<const double> deltas, int H, const EnergyModel& em);
double objective(const CompressionPlan& plan, const EnergyModel& em);

/// Partial derivatives of the objective in each delta_m.
std::vector<double> objective_gradient(std::span<const double> deltas, int H, const EnergyModel& em);

/// Convex surrogate around `expansion`: Gamma1(d) Gamma2(x) + Gamma1(x) Gamma2(d).
double surrogate(std::span<const double> deltas, std::span<const double> expansion, int H,
                 const EnergyModel& em);

struct ClosedFormResult {
  std::vector<double> deltas;
  std::vector<bool> interior;  // stationary point strictly inside the box
  std::size_t fallbacks = 0;   // coordinates solved numerically
  std::vector<std::string> events;
};

/**
 * Per-coordinate minimiser of the surrogate around `expansion`.
 *
 * With A = c_alpha H, B = 1 - kappa ln2, D = Gamma1(x), E = Gamma2(x) ln2 the
 * stationary point is exp(-W(z)/3 + B), z = -6 A E e^{3B} / (D C_m). Both
 * real branches are tried and compared, together with the two bounds, on the
 * coordinate's surrogate term. When z is outside [-1/e, 0) or C_m = 0 the
 * coordinate falls back to golden-section search plus the bounds.
 */
ClosedFormResult closed_form_delta(std::span<const double> expansion, int H, const EnergyModel& em);

struct IcaSettings {
  double gamma0 = 0.9;
  double xi = 1e-5;
  double iota = 1e-5;
  std::size_t max_inner = 100000;
  bool record_iterates = false;
};

struct PrimalResult {
  int H = 1;
  std::vector<double> deltas;
  std::vector<double> lambda_lb;  // multipliers of delta_m >= delta_lb
  std::vector<double> lambda_ub;  // multipliers of delta_m <= delta_ub
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t fallbacks = 0;
  std::vector<std::vector<double>> iterates;  // delta^0, delta^1, ... when recorded
  std::vector<double> step_sizes;             // gamma^0, gamma^1, ... when recorded
};

/// Inner convex approximation of the primal problem at fixed H, started from
/// delta_lb. The returned point is the better (in objective) of the last
/// iterate and its surrogate minimiser.
PrimalResult solve_primal_ica(int H, const EnergyModel& em, const IcaSettings& settings = {});

/// KKT multipliers of the box constraints reconstructed from the gradient.
void box_multipliers(std::span<const double> deltas, int H, const EnergyModel& em,
                     std::vector<double>& lambda_lb, std::vector<double>& lambda_ub, double rel_tol = 1e-6);

/// Data frozen from one primal solve.
struct Cut {
  int H = 1;
  std::vector<double> deltas;
  std::vector<double> lambda_lb;
  std::vector<double> lambda_ub;
  double value = 0.0;  // primal objective at (deltas, H)
};

/// Gamma(delta^(l), H) + sum_m lambda1 (delta_lb - delta_m^(l)) + lambda2 (delta_m^(l) - delta_ub).
double cut_value(const Cut& cut, int H, const EnergyModel& em);

struct MasterResult {
  int H = 1;
  double eta = 0.0;
};

/// min over H in the candidate set of max over cuts of cut_value, by
/// enumeration. Ties pick the earlier candidate.
MasterResult solve_master(std::span<const Cut> cuts, std::span<const int> h_candidates, const EnergyModel& em);

/// How the outer loop turns cuts into a lower bound.
enum class CutRule {
  /// Valid bound per H: the exact primal value once H is visited, otherwise
  /// the larger of the box relaxation and the H-rescaled primal values.
  bounded,
  /// The max-over-cuts master as written; not a valid lower bound in general.
  as_printed,
};

std::string to_string(CutRule rule);
CutRule cut_rule_from_string(const std::string& name);

/// Gamma1(delta_lb) * Gamma2(delta_ub): a lower bound on the primal value at H.
double box_relaxation(int H, const EnergyModel& em);

struct BendersSettings {
  double epsilon = 1e-5;
  std::size_t max_outer = 50;
  CutRule cut_rule = CutRule::bounded;
  IcaSettings ica;
};

struct BendersIteration {
  std::size_t i = 0;
  int H = 1;
  double primal_objective = 0.0;
  double ubd = 0.0;
  double lbd = 0.0;
  double master_eta = 0.0;  // value of the max-over-cuts master
  int H_next = 1;
};

struct PlanResult {
  std::string scheme;
  CompressionPlan plan;
  double objective = 0.0;
  double gap = 0.0;
  bool converged = true;
  std::vector<BendersIteration> history;
  std::vector<std::string> events;

  nlohmann::json to_json() const;
};

/// Benders loop over H with the ICA primal solver.
PlanResult solve_flexible(const EnergyModel& em, const BendersSettings& settings = {});

/// Exhaustive search over a log-spaced delta grid per device times the H
/// candidates. Refuses more than three devices.
PlanResult oracle_brute_force(const EnergyModel& em, std::size_t grid_n = 400);

enum class Scheme { flexible, syn_sgd_spars, greedy_spars, unified_spar };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

/// Plan for the named scheme:
///  - syn_sgd_spars: H = 1, deltas by the ICA primal solver
///  - greedy_spars: delta_ub for everyone and the smallest H (minimises per-round energy)
///  - unified_spar: one shared delta, dense log grid times H then golden-section refinement
PlanResult solve_scheme(Scheme scheme, const EnergyModel& em, const BendersSettings& settings = {});

}  // namespace flexspar
