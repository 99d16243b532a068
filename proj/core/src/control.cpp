#include "flexspar/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

#include "flexspar/numerics.hpp"

namespace flexspar {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Per-device constants of the objective.
struct Terms {
  std::size_t M = 0;
  double c_alpha = 0.0;
  double c_beta = 0.0;
  double kappa = 33.0;
  double lb = 0.0;
  double ub = 0.0;
  std::vector<double> C;   // P s1 d / R
  std::vector<double> F;   // P s0 / R
  std::vector<double> E0;  // compute energy per iteration

  explicit Terms(const EnergyModel& em)
      : M(em.devices.size()),
        c_alpha(em.c_alpha),
        c_beta(em.c_beta),
        kappa(static_cast<double>(em.fpp + 1)),
        lb(em.delta_lb),
        ub(em.delta_ub) {
    em.validate();
    for (const auto& dev : em.devices) {
      C.push_back(dev.tx_power_w * em.s1 * static_cast<double>(em.dim) / dev.rate_bps);
      F.push_back(dev.tx_power_w * em.s0 / dev.rate_bps);
      E0.push_back(dev.compute_j_per_iter);
    }
  }

  double period_term(int H) const { return c_beta / (std::pow(static_cast<double>(M), 1.5) * H); }
  double g1_term(double delta, int H) const { return c_alpha * H * delta * delta + period_term(H); }
  double payload_term(std::size_t m, double delta) const {
    return C[m] * (std::log2(delta) + kappa) / delta;
  }
  double g2_term(std::size_t m, double delta, int H) const {
    return payload_term(m, delta) + F[m] + E0[m] * H;
  }
  double g1(std::span<const double> x, int H) const {
    double s = 0.0;
    for (const double d : x) s += g1_term(d, H);
    return s;
  }
  double g2(std::span<const double> x, int H) const {
    double s = 0.0;
    for (std::size_t m = 0; m < x.size(); ++m) s += g2_term(m, x[m], H);
    return s;
  }
};

void check_size(std::span<const double> deltas, const EnergyModel& em) {
  if (deltas.size() != em.devices.size()) {
    throw std::invalid_argument("control: expected " + std::to_string(em.devices.size()) + " sparsities, got " +
                                std::to_string(deltas.size()));
  }
}

std::vector<int> sorted_candidates(const EnergyModel& em) {
  std::vector<int> hs = em.h_candidates;
  std::sort(hs.begin(), hs.end());
  hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
  return hs;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  if (n == 1) {
    g[0] = lo;
    return g;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  for (std::size_t j = 0; j < n; ++j) {
    g[j] = std::exp(llo + (lhi - llo) * static_cast<double>(j) / static_cast<double>(n - 1));
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace

double gamma1(std::span<const double> deltas, int H, const EnergyModel& em) {
  check_size(deltas, em);
  return Terms(em).g1(deltas, H);
}

double gamma2(std::span<const double> deltas, int H, const EnergyModel& em) {
  check_size(deltas, em);
  return Terms(em).g2(deltas, H);
}

double objective(std::span<const double> deltas, int H, const EnergyModel& em) {
  check_size(deltas, em);
  const Terms t(em);
  return t.g1(deltas, H) * t.g2(deltas, H);
}

double objective(const CompressionPlan& plan, const EnergyModel& em) {
  return objective(plan.deltas, plan.H, em);
}

std::vector<double> objective_gradient(std::span<const double> deltas, int H, const EnergyModel& em) {
  check_size(deltas, em);
  const Terms t(em);
  const double g1 = t.g1(deltas, H);
  const double g2 = t.g2(deltas, H);
  const double B = 1.0 - t.kappa * std::log(2.0);
  std::vector<double> grad(deltas.size());
  for (std::size_t m = 0; m < deltas.size(); ++m) {
    const double d = deltas[m];
    grad[m] = 2.0 * t.c_alpha * H * d * g2 + g1 * t.C[m] * (B - std::log(d)) / (std::log(2.0) * d * d);
  }
  return grad;
}

double surrogate(std::span<const double> deltas, std::span<const double> expansion, int H,
                 const EnergyModel& em) {
  check_size(deltas, em);
  check_size(expansion, em);
  const Terms t(em);
  return t.g1(deltas, H) * t.g2(expansion, H) + t.g1(expansion, H) * t.g2(deltas, H);
}

ClosedFormResult closed_form_delta(std::span<const double> expansion, int H, const EnergyModel& em) {
  check_size(expansion, em);
  const Terms t(em);
  const double A = t.c_alpha * H;
  const double B = 1.0 - t.kappa * std::log(2.0);
  const double D = t.g1(expansion, H);
  const double g2 = t.g2(expansion, H);
  const double E = g2 * std::log(2.0);

  ClosedFormResult out;
  out.deltas.resize(t.M);
  out.interior.assign(t.M, false);
  for (std::size_t m = 0; m < t.M; ++m) {
    // the part of the surrogate that depends on delta_m
    const auto phi = [&](double d) { return g2 * A * d * d + D * t.payload_term(m, d); };
    std::vector<double> candidates{t.lb, t.ub};
    const double z = -6.0 * A * E * std::exp(3.0 * B) / (D * t.C[m]);
    bool stationary = false;
    if (t.C[m] > 0.0 && D > 0.0 && std::isfinite(z) && z >= -std::exp(-1.0) && z < 0.0) {
      for (const WBranch branch : {WBranch::lower, WBranch::principal}) {
        const double raw = std::exp(-lambert_w(z, branch) / 3.0 + B);
        candidates.push_back(std::clamp(raw, t.lb, t.ub));
      }
      stationary = true;
    } else {
      ++out.fallbacks;
      out.events.push_back("device " + std::to_string(m) + ", H=" + std::to_string(H) + ": closed-form argument " +
                           format_double(z) + " outside [-1/e, 0); golden-section fallback");
      candidates.push_back(golden_section_min(phi, t.lb, t.ub));
    }
    double best = candidates[0];
    double best_val = phi(best);
    for (std::size_t c = 1; c < candidates.size(); ++c) {
      const double v = phi(candidates[c]);
      if (v < best_val) {
        best_val = v;
        best = candidates[c];
      }
    }
    out.deltas[m] = best;
    out.interior[m] = stationary && best > t.lb && best < t.ub;
  }
  return out;
}

void box_multipliers(std::span<const double> deltas, int H, const EnergyModel& em,
                     std::vector<double>& lambda_lb, std::vector<double>& lambda_ub, double rel_tol) {
  const auto grad = objective_gradient(deltas, H, em);
  lambda_lb.assign(deltas.size(), 0.0);
  lambda_ub.assign(deltas.size(), 0.0);
  for (std::size_t m = 0; m < deltas.size(); ++m) {
    if (std::abs(deltas[m] - em.delta_lb) <= rel_tol * em.delta_lb) lambda_lb[m] = std::max(0.0, grad[m]);
    if (std::abs(deltas[m] - em.delta_ub) <= rel_tol * em.delta_ub) lambda_ub[m] = std::max(0.0, -grad[m]);
  }
}

PrimalResult solve_primal_ica(int H, const EnergyModel& em, const IcaSettings& s) {
  if (H < 1) throw std::invalid_argument("solve_primal_ica: H must be >= 1");
  if (!(s.gamma0 > 0.0 && s.gamma0 <= 1.0)) throw std::invalid_argument("solve_primal_ica: gamma0 must lie in (0, 1]");
  em.validate();
  const std::size_t M = em.devices.size();
  PrimalResult res;
  res.H = H;
  std::vector<double> x(M, em.delta_lb);
  double gamma = s.gamma0;
  if (s.record_iterates) {
    res.iterates.push_back(x);
    res.step_sizes.push_back(gamma);
  }
  while (res.iterations < s.max_inner) {
    const auto star = closed_form_delta(x, H, em);
    res.fallbacks += star.fallbacks;
    double diff = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double next = std::clamp(x[m] + gamma * (star.deltas[m] - x[m]), em.delta_lb, em.delta_ub);
      diff += (next - x[m]) * (next - x[m]);
      x[m] = next;
    }
    gamma *= 1.0 - s.xi * gamma;
    ++res.iterations;
    if (s.record_iterates) {
      res.iterates.push_back(x);
      res.step_sizes.push_back(gamma);
    }
    if (diff <= s.iota) {
      res.converged = true;
      break;
    }
  }
  const auto polish = closed_form_delta(x, H, em);
  res.fallbacks += polish.fallbacks;
  if (objective(polish.deltas, H, em) < objective(x, H, em)) x = polish.deltas;
  res.deltas = std::move(x);
  res.objective = objective(res.deltas, H, em);
  box_multipliers(res.deltas, H, em, res.lambda_lb, res.lambda_ub);
  return res;
}

double cut_value(const Cut& cut, int H, const EnergyModel& em) {
  double v = objective(cut.deltas, H, em);
  for (std::size_t m = 0; m < cut.deltas.size(); ++m) {
    v += cut.lambda_lb[m] * (em.delta_lb - cut.deltas[m]) + cut.lambda_ub[m] * (cut.deltas[m] - em.delta_ub);
  }
  return v;
}

MasterResult solve_master(std::span<const Cut> cuts, std::span<const int> h_candidates, const EnergyModel& em) {
  if (cuts.empty()) throw std::invalid_argument("solve_master: empty cut pool");
  if (h_candidates.empty()) throw std::invalid_argument("solve_master: empty H candidate set");
  MasterResult best{h_candidates[0], kInf};
  for (const int h : h_candidates) {
    double worst = -kInf;
    for (const auto& cut : cuts) worst = std::max(worst, cut_value(cut, h, em));
    if (worst < best.eta) best = {h, worst};
  }
  return best;
}

std::string to_string(CutRule rule) { return rule == CutRule::bounded ? "bounded" : "as_printed"; }

CutRule cut_rule_from_string(const std::string& name) {
  if (name == "bounded") return CutRule::bounded;
  if (name == "as_printed") return CutRule::as_printed;
  throw std::invalid_argument("unknown cut rule '" + name + "'");
}

double box_relaxation(int H, const EnergyModel& em) {
  const Terms t(em);
  const std::vector<double> lo(t.M, t.lb), hi(t.M, t.ub);
  return t.g1(lo, H) * t.g2(hi, H);
}

PlanResult solve_flexible(const EnergyModel& em, const BendersSettings& s) {
  em.validate();
  const auto hs = sorted_candidates(em);
  PlanResult out;
  out.scheme = "flexible";

  std::map<int, double> relax;
  for (const int h : hs) relax[h] = box_relaxation(h, em);
  std::map<int, double> visited;
  std::vector<Cut> cuts;
  double ubd = kInf, lbd = -kInf;

  int h_cur = s.cut_rule == CutRule::bounded ? hs[0] : em.h_candidates[0];
  if (s.cut_rule == CutRule::bounded) {
    for (const int h : hs) {
      if (relax[h] < relax[h_cur]) h_cur = h;
    }
  }
  out.converged = false;
  for (std::size_t i = 1; i <= s.max_outer; ++i) {
    const auto primal = solve_primal_ica(h_cur, em, s.ica);
    if (primal.fallbacks > 0) {
      out.events.push_back("H=" + std::to_string(h_cur) + ": " + std::to_string(primal.fallbacks) +
                           " closed-form coordinates used the golden-section fallback");
    }
    if (!primal.converged) out.events.push_back("H=" + std::to_string(h_cur) + ": inner loop hit max_inner");
    visited[h_cur] = primal.objective;
    if (primal.objective < ubd) {
      ubd = primal.objective;
      out.plan = {primal.deltas, h_cur};
    }
    cuts.push_back({h_cur, primal.deltas, primal.lambda_lb, primal.lambda_ub, primal.objective});
    const auto master = solve_master(cuts, hs, em);

    int h_next = master.H;
    if (s.cut_rule == CutRule::bounded) {
      double lb_min = kInf;
      for (const int h : hs) {
        double lb;
        if (const auto it = visited.find(h); it != visited.end()) {
          lb = it->second;
        } else {
          lb = relax[h];
          for (const auto& cut : cuts) {
            const double ratio = static_cast<double>(h) / cut.H;
            lb = std::max(lb, std::min(ratio, 1.0 / ratio) * std::min(1.0, ratio) * cut.value);
          }
        }
        if (lb < lb_min) {
          lb_min = lb;
          h_next = h;
        }
      }
      lbd = std::max(lbd, lb_min);
    } else {
      lbd = master.eta;
    }
    out.history.push_back({i, h_cur, primal.objective, ubd, lbd, master.eta, h_next});
    if (ubd - lbd <= s.epsilon) {
      out.converged = true;
      break;
    }
    if (visited.count(h_next) != 0) {
      // re-solving a visited H reproduces the same cut, so the loop cannot move
      out.events.push_back("master proposed visited H=" + std::to_string(h_next) + " with gap " +
                           format_double(ubd - lbd));
      break;
    }
    h_cur = h_next;
  }
  out.objective = ubd;
  out.gap = ubd - lbd;
  if (!out.converged) out.events.push_back("stopped with gap " + format_double(out.gap));
  return out;
}

PlanResult oracle_brute_force(const EnergyModel& em, std::size_t grid_n) {
  const Terms t(em);
  if (t.M > 3) throw std::invalid_argument("oracle_brute_force: at most 3 devices, got " + std::to_string(t.M));
  if (grid_n < 2) throw std::invalid_argument("oracle_brute_force: grid_n must be >= 2");
  const auto grid = log_grid(t.lb, t.ub, grid_n);
  PlanResult out;
  out.scheme = "oracle";
  out.objective = kInf;
  for (const int h : sorted_candidates(em)) {
    std::vector<std::vector<double>> a(t.M, std::vector<double>(grid_n));
    std::vector<std::vector<double>> c(t.M, std::vector<double>(grid_n));
    for (std::size_t m = 0; m < t.M; ++m) {
      for (std::size_t j = 0; j < grid_n; ++j) {
        a[m][j] = t.g1_term(grid[j], h);
        c[m][j] = t.g2_term(m, grid[j], h);
      }
    }
    std::size_t total = 1;
    for (std::size_t m = 0; m < t.M; ++m) total *= grid_n;
    std::vector<std::size_t> idx(t.M);
    // flat index with the first device most significant, so the strict '<'
    // keeps the lexicographically lowest grid point on ties
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rest = flat;
      double sa = 0.0, sc = 0.0;
      for (std::size_t m = t.M; m-- > 0;) {
        idx[m] = rest % grid_n;
        rest /= grid_n;
        sa += a[m][idx[m]];
        sc += c[m][idx[m]];
      }
      const double v = sa * sc;
      if (v < out.objective) {
        out.objective = v;
        out.plan.H = h;
        out.plan.deltas.resize(t.M);
        for (std::size_t m = 0; m < t.M; ++m) out.plan.deltas[m] = grid[idx[m]];
      }
    }
  }
  return out;
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::flexible: return "flexible";
    case Scheme::syn_sgd_spars: return "syn_sgd_spars";
    case Scheme::greedy_spars: return "greedy_spars";
    case Scheme::unified_spar: return "unified_spar";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
  for (const Scheme s : {Scheme::flexible, Scheme::syn_sgd_spars, Scheme::greedy_spars, Scheme::unified_spar}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

namespace {

PlanResult unified_plan(const EnergyModel& em) {
  const Terms t(em);
  constexpr std::size_t kGrid = 4000;
  const auto grid = log_grid(t.lb, t.ub, kGrid);
  PlanResult out;
  out.scheme = to_string(Scheme::unified_spar);
  out.objective = kInf;
  const auto shared = [&](double d, int h) {
    const std::vector<double> x(t.M, d);
    return t.g1(x, h) * t.g2(x, h);
  };
  for (const int h : sorted_candidates(em)) {
    std::size_t best_j = 0;
    double best_v = kInf;
    for (std::size_t j = 0; j < kGrid; ++j) {
      const double v = shared(grid[j], h);
      if (v < best_v) {
        best_v = v;
        best_j = j;
      }
    }
    const double lo = grid[best_j == 0 ? 0 : best_j - 1];
    const double hi = grid[std::min(best_j + 1, kGrid - 1)];
    double d = golden_section_min([&](double x) { return shared(x, h); }, lo, hi);
    double v = shared(d, h);
    if (best_v < v) {
      v = best_v;
      d = grid[best_j];
    }
    if (v < out.objective) {
      out.objective = v;
      out.plan = {std::vector<double>(t.M, d), h};
    }
  }
  return out;
}

}  // namespace

PlanResult solve_scheme(Scheme scheme, const EnergyModel& em, const BendersSettings& settings) {
  em.validate();
  switch (scheme) {
    case Scheme::flexible: return solve_flexible(em, settings);
    case Scheme::syn_sgd_spars: {
      const auto primal = solve_primal_ica(1, em, settings.ica);
      PlanResult out;
      out.scheme = to_string(scheme);
      out.plan = {primal.deltas, 1};
      out.objective = primal.objective;
      out.converged = primal.converged;
      return out;
    }
    case Scheme::greedy_spars: {
      PlanResult out;
      out.scheme = to_string(scheme);
      out.plan = {std::vector<double>(em.devices.size(), em.delta_ub), sorted_candidates(em).front()};
      out.objective = objective(out.plan, em);
      return out;
    }
    case Scheme::unified_spar: return unified_plan(em);
  }
  throw std::invalid_argument("solve_scheme: unknown scheme");
}

nlohmann::json PlanResult::to_json() const {
  return {{"deltas", plan.deltas}, {"H", plan.H}, {"objective", objective}, {"gap", gap}, {"scheme", scheme}};
}

}  // namespace flexspar
