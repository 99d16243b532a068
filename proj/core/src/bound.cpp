#include "flexspar/bound.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "flexspar/fedcore.hpp"

namespace flexspar {

double rms_delta(std::span<const double> deltas) {
  if (deltas.empty()) throw std::invalid_argument("rms_delta: empty sparsity series");
  double acc = 0.0;
  for (const double d : deltas) {
    if (!(d >= 1.0)) throw std::invalid_argument("rms_delta: sparsity below 1");
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(deltas.size()));
}

BoundValue theorem1_rhs(const BoundInputs& in) {
  if (!(in.theta > 0.0 && in.M > 0.0 && in.T > 0.0 && in.b0 > 0.0)) {
    throw std::invalid_argument("theorem1_rhs: theta, M, T and b0 must be positive");
  }
  BoundValue out;
  const double delta = in.deltas.empty() ? 1.0 : rms_delta(in.deltas);
  const double sqrt_m = std::sqrt(in.M);

  out.init_term = 4.0 * in.f0_gap / (in.theta * std::sqrt(in.M * in.T));
  if (in.rho > 1.0) {
    out.variance_term = 8.0 * in.rho * in.theta * in.L * in.sigma * in.sigma /
                        ((in.rho - 1.0) * in.b0 * sqrt_m * std::pow(in.T, 1.5));
  } else {
    out.variance_term = in.sigma > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    out.warnings.emplace_back("rho <= 1: the batch-growth term is unbounded");
  }
  out.drift_term = (4.0 * delta * delta + 1.0) * 8.0 * in.M * in.theta * in.theta * in.L * in.L *
                   in.G * in.G * in.H * in.H / in.T;
  out.value = out.init_term + out.variance_term + out.drift_term;

  const double eta = in.theta * sqrt_m / std::sqrt(in.T);
  if (in.L > 0.0 && eta > (1.0 + 1e-12) / (2.0 * in.L)) {
    out.premise_ok = false;
    out.warnings.emplace_back("step size theta*sqrt(M/T) exceeds 1/(2L)");
  }
  return out;
}

RoundsEstimate rounds_K(double delta, double H, const RoundsConstants& c) {
  if (!(c.sigma > 0.0 && c.epsilon > 0.0 && c.b0 > 0.0 && c.M > 0.0 && H > 0.0)) {
    throw std::invalid_argument("rounds_K: sigma, epsilon, b0, M and H must be positive");
  }
  const double spars = 4.0 * delta * delta + 1.0;
  const double drift =
      8.0 * c.b0 * c.M * c.L * c.G * c.G * c.J * c.J * H * H * spars / (c.epsilon * c.sigma * c.sigma);
  const double noise = c.L * c.sigma * c.sigma * c.J * c.J / (c.epsilon * c.epsilon * c.b0 * c.M);
  RoundsEstimate out;
  out.T = drift + 72.0 * noise + std::sqrt(drift + 36.0 * noise);
  out.K = out.T / H;
  out.lead_sparsity = c.M * H * delta * delta;
  out.lead_period = 1.0 / (std::sqrt(c.M) * H);
  return out;
}

nlohmann::json BoundReport::to_json() const {
  nlohmann::json j;
  j["check"] = check;
  j["measured"] = measured;
  j["rhs"] = rhs.value;
  j["terms"] = {{"init", rhs.init_term}, {"variance", rhs.variance_term}, {"drift", rhs.drift_term}};
  j["premise_ok"] = rhs.premise_ok;
  j["evaluated"] = evaluated;
  j["holds"] = evaluated ? nlohmann::json(holds) : nlohmann::json(nullptr);
  j["warnings"] = rhs.warnings;
  return j;
}

BoundReport verify_bound_on_run(std::span<const RoundTrace> trace, const BoundInputs& in) {
  BoundReport report;
  report.rhs = theorem1_rhs(in);
  if (trace.empty()) {
    report.rhs.warnings.emplace_back("empty trace");
    return report;
  }
  double acc = 0.0;
  for (const auto& rec : trace) acc += rec.grad_norm_sq_mean;
  report.measured = acc / static_cast<double>(trace.size());
  if (!report.rhs.premise_ok) return report;
  report.evaluated = true;
  report.holds = report.measured <= report.rhs.value;
  return report;
}

}  // namespace flexspar
