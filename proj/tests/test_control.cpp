#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "flexspar/control.hpp"
#include "support/instances.hpp"

namespace {

using namespace flexspar;
using flexspar::testing::golden_min;
using flexspar::testing::payload_constant;
using flexspar::testing::random_instance;

std::vector<double> random_point(RandomStream& rng, const EnergyModel& em) {
  std::vector<double> x(em.devices.size());
  for (auto& v : x) v = flexspar::testing::log_uniform(rng, em.delta_lb, em.delta_ub);
  return x;
}

// One device, constants chosen so every term is easy to write out.
EnergyModel toy_model() {
  EnergyModel em;
  em.dim = 1000;
  em.s0 = 100.0;
  em.s1 = 1.0;
  em.c_alpha = 0.001;
  em.c_beta = 10.0;
  em.delta_ub = 100.0;
  em.h_candidates = {1, 2, 4};
  em.devices = {{1.0, 1000.0, 0.5}};  // C = 1, F = 0.1, E0 = 0.5
  return em;
}

double toy_gamma(double d, int H) {
  const double g1 = 0.001 * H * d * d + 10.0 / H;
  const double g2 = (std::log2(d) + 33.0) / d + 0.1 + 0.5 * H;
  return g1 * g2;
}

TEST(Objective, AgreesWithEnergyModule) {
  RandomStream rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const auto em = random_instance(rng, 1 + rng.uniform_index(5));
    const CompressionPlan plan{random_point(rng, em), em.h_candidates[rng.uniform_index(5)]};
    const double expected = total_energy_objective(plan, em, PayloadMode::approx);
    EXPECT_NEAR(objective(plan, em), expected, 1e-12 * expected);
    EXPECT_NEAR(gamma1(plan.deltas, plan.H, em) * gamma2(plan.deltas, plan.H, em), objective(plan, em),
                1e-14 * expected);
  }
  EXPECT_NEAR(objective(std::vector<double>{7.0}, 2, toy_model()), toy_gamma(7.0, 2), 1e-12);
  EXPECT_THROW(objective(std::vector<double>{7.0, 8.0}, 2, toy_model()), std::invalid_argument);
}

TEST(Objective, GradientMatchesFiniteDifference) {
  RandomStream rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto em = random_instance(rng, 1 + rng.uniform_index(4));
    const auto x = random_point(rng, em);
    const int H = em.h_candidates[rng.uniform_index(5)];
    const auto g = objective_gradient(x, H, em);
    for (std::size_t m = 0; m < x.size(); ++m) {
      const double h = 1e-6 * x[m];
      auto xp = x, xm = x;
      xp[m] += h;
      xm[m] -= h;
      const double fd = (objective(xp, H, em) - objective(xm, H, em)) / (2 * h);
      EXPECT_NEAR(g[m], fd, 1e-5 * std::max(std::abs(fd), objective(x, H, em) / x[m]));
    }
  }
}

TEST(Surrogate, TouchesObjectiveWithMatchingSlope) {
  RandomStream rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    const auto em = random_instance(rng, 3);
    const auto x = random_point(rng, em);
    const int H = 4;
    EXPECT_NEAR(surrogate(x, x, H, em), 2.0 * objective(x, H, em), 1e-12 * objective(x, H, em));
    const auto g = objective_gradient(x, H, em);
    for (std::size_t m = 0; m < 3; ++m) {
      const double h = 1e-6 * x[m];
      auto xp = x, xm = x;
      xp[m] += h;
      xm[m] -= h;
      const double fd = (surrogate(xp, x, H, em) - surrogate(xm, x, H, em)) / (2 * h);
      EXPECT_NEAR(fd, g[m], 1e-5 * std::max(std::abs(g[m]), objective(x, H, em) / x[m]));
    }
  }
}

TEST(ClosedForm, MatchesGoldenSectionOnSurrogateTerm) {
  RandomStream rng(4);
  std::size_t interior = 0;
  for (int rep = 0; rep < 150; ++rep) {
    const std::size_t M = std::vector<std::size_t>{1, 2, 4}[rep % 3];
    const auto em = random_instance(rng, M);
    const auto x = random_point(rng, em);
    const int H = em.h_candidates[rep % 5];
    const auto cf = closed_form_delta(x, H, em);
    const double A = em.c_alpha * H;
    const double D = gamma1(x, H, em);
    const double G2 = gamma2(x, H, em);
    const double kappa = em.fpp + 1.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double C = payload_constant(em, m);
      const auto phi = [&](double d) { return G2 * A * d * d + D * C * (std::log2(d) + kappa) / d; };
      const double ref = golden_min(phi, em.delta_lb, em.delta_ub);
      // the returned point is never worse than the 1-D reference
      EXPECT_LE(phi(cf.deltas[m]), phi(ref) * (1.0 + 1e-12));
      if (!cf.interior[m]) continue;
      ++interior;
      EXPECT_NEAR(cf.deltas[m], ref, 1e-6 * ref);
      const double d = cf.deltas[m];
      const double quad = 2.0 * G2 * A * d;
      const double pay = D * C * (1.0 / std::log(2.0) - std::log2(d) - kappa) / (d * d);
      EXPECT_LT(std::abs(quad + pay) / (std::abs(quad) + std::abs(pay)), 1e-6);
    }
  }
  EXPECT_GT(interior, 20u);
}

TEST(ClosedForm, FallsBackWithoutPayload) {
  auto em = toy_model();
  em.devices[0].tx_power_w = 0.0;  // C = 0 makes the W argument undefined
  const auto cf = closed_form_delta(std::vector<double>{10.0}, 1, em);
  EXPECT_EQ(cf.fallbacks, 1u);
  EXPECT_EQ(cf.events.size(), 1u);
  EXPECT_DOUBLE_EQ(cf.deltas[0], em.delta_lb);
}

TEST(Ica, ReachesFineGridOptimumAtFixedH) {
  RandomStream rng(5);
  for (int rep = 0; rep < 12; ++rep) {
    const auto em = random_instance(rng, 2);
    const int H = em.h_candidates[rep % 5];
    const auto res = solve_primal_ica(H, em);
    EXPECT_TRUE(em.plan_feasible(CompressionPlan{res.deltas, H}, 1e-12));
    const std::size_t n = 300;
    double best = std::numeric_limits<double>::infinity();
    const double llo = std::log(em.delta_lb), lhi = std::log(em.delta_ub);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::vector<double> p{std::exp(llo + (lhi - llo) * i / (n - 1.0)), std::exp(llo + (lhi - llo) * j / (n - 1.0))};
        best = std::min(best, objective(p, H, em));
      }
    }
    EXPECT_LE(res.objective, best * (1.0 + 1e-6)) << "instance " << rep;
    EXPECT_DOUBLE_EQ(res.objective, objective(res.deltas, H, em));
  }
}

TEST(Ica, StepSizeScheduleAndIterates) {
  const auto em = toy_model();
  IcaSettings s;
  s.gamma0 = 0.5;
  s.xi = 0.1;
  s.record_iterates = true;
  const auto res = solve_primal_ica(2, em, s);
  ASSERT_EQ(res.step_sizes.size(), res.iterations + 1);
  EXPECT_DOUBLE_EQ(res.step_sizes[0], 0.5);
  for (std::size_t i = 1; i < res.step_sizes.size(); ++i) {
    const double g = res.step_sizes[i - 1];
    EXPECT_DOUBLE_EQ(res.step_sizes[i], g * (1.0 - 0.1 * g));
  }
  EXPECT_EQ(res.iterates.front(), std::vector<double>{em.delta_lb});
  EXPECT_TRUE(res.converged);
  IcaSettings bad;
  bad.gamma0 = 1.5;
  EXPECT_THROW(solve_primal_ica(1, em, bad), std::invalid_argument);
  EXPECT_THROW(solve_primal_ica(0, em), std::invalid_argument);
}

TEST(Multipliers, ActiveBoundsOnly) {
  const auto em = toy_model();
  std::vector<double> lo, hi;
  // at delta_lb the toy objective increases in delta for large H
  box_multipliers(std::vector<double>{em.delta_lb}, 4, em, lo, hi);
  const double g = objective_gradient(std::vector<double>{em.delta_lb}, 4, em)[0];
  EXPECT_DOUBLE_EQ(lo[0], std::max(0.0, g));
  EXPECT_EQ(hi[0], 0.0);
  box_multipliers(std::vector<double>{20.0}, 4, em, lo, hi);
  EXPECT_EQ(lo[0], 0.0);
  EXPECT_EQ(hi[0], 0.0);
}

TEST(Master, TwoCutToyByHand) {
  const auto em = toy_model();
  const Cut a{1, {5.0}, {0.3}, {0.0}, toy_gamma(5.0, 1)};
  const Cut b{4, {30.0}, {0.0}, {0.2}, toy_gamma(30.0, 4)};
  const double lb = em.delta_lb;
  EXPECT_NEAR(cut_value(a, 2, em), toy_gamma(5.0, 2) + 0.3 * (lb - 5.0), 1e-12);
  EXPECT_NEAR(cut_value(b, 2, em), toy_gamma(30.0, 2) + 0.2 * (30.0 - 100.0), 1e-12);

  const std::vector<Cut> cuts{a, b};
  double want_eta = std::numeric_limits<double>::infinity();
  int want_h = 0;
  for (const int h : {1, 2, 4}) {
    const double va = toy_gamma(5.0, h) + 0.3 * (lb - 5.0);
    const double vb = toy_gamma(30.0, h) + 0.2 * (30.0 - 100.0);
    if (std::max(va, vb) < want_eta) {
      want_eta = std::max(va, vb);
      want_h = h;
    }
  }
  const auto master = solve_master(cuts, em.h_candidates, em);
  EXPECT_EQ(master.H, want_h);
  EXPECT_NEAR(master.eta, want_eta, 1e-12 * want_eta);
  EXPECT_THROW(solve_master(std::vector<Cut>{}, em.h_candidates, em), std::invalid_argument);
}

TEST(Benders, CloseToBruteForceWithMonotoneBounds) {
  RandomStream rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const auto em = random_instance(rng, 2);
    const auto flex = solve_flexible(em);
    const auto oracle = oracle_brute_force(em, 200);
    EXPECT_LE(flex.objective, oracle.objective * 1.02) << rep;
    EXPECT_TRUE(em.plan_feasible(flex.plan, 1e-12));
    EXPECT_NEAR(flex.objective, objective(flex.plan, em), 1e-12 * flex.objective);
    for (std::size_t i = 0; i < flex.history.size(); ++i) {
      const auto& it = flex.history[i];
      EXPECT_LE(it.lbd, it.ubd * (1.0 + 1e-12));
      if (i > 0) {
        EXPECT_LE(it.ubd, flex.history[i - 1].ubd);
        EXPECT_GE(it.lbd, flex.history[i - 1].lbd);
      }
    }
  }
}

TEST(Benders, RelaxationIsALowerBound) {
  RandomStream rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto em = random_instance(rng, 2);
    for (const int h : em.h_candidates) {
      const double r = box_relaxation(h, em);
      for (int k = 0; k < 20; ++k) EXPECT_LE(r, objective(random_point(rng, em), h, em));
    }
  }
}

TEST(Benders, AsPrintedRuleRunsAndIsRecorded) {
  RandomStream rng(8);
  const auto em = random_instance(rng, 2);
  BendersSettings s;
  s.cut_rule = CutRule::as_printed;
  const auto res = solve_flexible(em, s);
  ASSERT_FALSE(res.history.empty());
  EXPECT_EQ(res.history.front().H, em.h_candidates.front());
  for (const auto& it : res.history) EXPECT_EQ(it.lbd, it.master_eta);
  EXPECT_EQ(cut_rule_from_string("as_printed"), CutRule::as_printed);
  EXPECT_EQ(to_string(CutRule::bounded), "bounded");
  EXPECT_THROW(cut_rule_from_string("lagrangian"), std::invalid_argument);
}

TEST(Schemes, BaselinesHaveTheirShapeAndFlexibleDominates) {
  RandomStream rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const auto em = random_instance(rng, 1 + rng.uniform_index(3));
    const auto flex = solve_scheme(Scheme::flexible, em);
    const auto syn = solve_scheme(Scheme::syn_sgd_spars, em);
    const auto greedy = solve_scheme(Scheme::greedy_spars, em);
    const auto unified = solve_scheme(Scheme::unified_spar, em);
    EXPECT_EQ(syn.plan.H, 1);
    EXPECT_EQ(greedy.plan.H, 1);
    for (const double d : greedy.plan.deltas) EXPECT_EQ(d, em.delta_ub);
    for (const double d : unified.plan.deltas) EXPECT_EQ(d, unified.plan.deltas.front());
    for (const auto* b : {&syn, &greedy, &unified}) {
      EXPECT_LE(flex.objective, b->objective * (1.0 + 1e-9)) << b->scheme;
      EXPECT_NEAR(b->objective, objective(b->plan, em), 1e-12 * b->objective);
    }
  }
  EXPECT_EQ(scheme_from_string("unified_spar"), Scheme::unified_spar);
  EXPECT_THROW(scheme_from_string("fedavg"), std::invalid_argument);
}

TEST(Oracle, LimitsAndJson) {
  RandomStream rng(10);
  EXPECT_THROW(oracle_brute_force(random_instance(rng, 4)), std::invalid_argument);
  const auto em = random_instance(rng, 1);
  const auto o = oracle_brute_force(em, 50);
  EXPECT_TRUE(em.plan_feasible(o.plan, 1e-12));
  const auto j = o.to_json();
  for (const char* key : {"deltas", "H", "objective", "gap", "scheme"}) EXPECT_TRUE(j.contains(key)) << key;
}

}  // namespace
