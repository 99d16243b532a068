#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <stdexcept>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <gtest/gtest.h>

#include "flexspar/numerics.hpp"

namespace {

using namespace flexspar;

const double kInvE = std::exp(-1.0);

// Solves w e^w = x by bisection on the monotone piece of the chosen branch.
double w_by_bisection(double x, WBranch branch) {
  double lo, hi;
  if (branch == WBranch::principal) {
    lo = -1.0;
    hi = std::max(1.0, std::log1p(x) + 1.0);
  } else {
    lo = -800.0;
    hi = -1.0;
  }
  const auto g = [x](double w) { return w * std::exp(w) - x; };
  // principal: g increasing on [-1, inf); lower: g decreasing on (-inf, -1]
  const bool increasing = branch == WBranch::principal;
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    const bool above = g(mid) > 0.0;
    if (above == increasing) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double log2_binomial_exact(std::int64_t d, std::int64_t k) {
  namespace mp = boost::multiprecision;
  mp::cpp_int c = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    c *= d - k + i;
    c /= i;
  }
  const mp::cpp_bin_float_50 f(c);
  return static_cast<double>(mp::log(f) / mp::log(mp::cpp_bin_float_50(2)));
}

TEST(LambertW, KnownValues) {
  EXPECT_DOUBLE_EQ(lambert_w(0.0, WBranch::principal), 0.0);
  EXPECT_NEAR(lambert_w(std::numbers::e, WBranch::principal), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(lambert_w(-kInvE, WBranch::principal), -1.0);
  EXPECT_DOUBLE_EQ(lambert_w(-kInvE, WBranch::lower), -1.0);
  // omega constant
  EXPECT_NEAR(lambert_w(1.0, WBranch::principal), 0.56714329040978387, 1e-15);
}

TEST(LambertW, MatchesBisectionOnBothBranches) {
  for (int i = 1; i < 400; ++i) {
    const double x = -kInvE * (1.0 - static_cast<double>(i) / 400.0);
    EXPECT_NEAR(lambert_w(x, WBranch::principal), w_by_bisection(x, WBranch::principal), 1e-12) << x;
    const double wl = lambert_w(x, WBranch::lower);
    EXPECT_NEAR(wl, w_by_bisection(x, WBranch::lower), 1e-11 * std::max(1.0, std::abs(wl))) << x;
  }
  for (const double x : {1e-12, 1e-4, 0.3, 2.0, 10.0, 1e3, 1e8, 1e100}) {
    const double w = lambert_w(x, WBranch::principal);
    EXPECT_NEAR(w, w_by_bisection(x, WBranch::principal), 1e-12 * std::max(1.0, w)) << x;
  }
}

TEST(LambertW, LowerBranchNearZeroIsVeryNegative) {
  for (const double x : {-1e-3, -1e-10, -1e-100, -1e-300}) {
    const double w = lambert_w(x, WBranch::lower);
    EXPECT_LT(w, -1.0);
    EXPECT_NEAR(w * std::exp(w), x, 1e-12 * std::abs(x)) << x;
  }
}

TEST(LambertW, DomainErrors) {
  EXPECT_THROW(lambert_w(-0.5, WBranch::principal), std::domain_error);
  EXPECT_THROW(lambert_w(0.1, WBranch::lower), std::domain_error);
  EXPECT_THROW(lambert_w(0.0, WBranch::lower), std::domain_error);
  EXPECT_THROW(lambert_w(std::nan(""), WBranch::principal), std::domain_error);
  // a rounding hair below the branch point snaps to it
  EXPECT_DOUBLE_EQ(lambert_w(std::nextafter(-kInvE, -1.0), WBranch::principal), -1.0);
}

TEST(Log2Binomial, MatchesExactBigInteger) {
  for (const auto [d, k] : std::vector<std::pair<std::int64_t, std::int64_t>>{
           {1, 0}, {1, 1}, {10, 3}, {64, 32}, {1000, 1}, {1000, 500}, {10000, 37}, {10000, 5000}}) {
    const double exact = log2_binomial_exact(d, k);
    EXPECT_NEAR(log2_binomial(d, k), exact, 1e-12 * std::max(1.0, exact)) << d << " " << k;
  }
}

TEST(Log2Binomial, SymmetricAndRejectsBadArguments) {
  EXPECT_DOUBLE_EQ(log2_binomial(50, 7), log2_binomial(50, 43));
  EXPECT_EQ(log2_binomial(9, 0), 0.0);
  EXPECT_THROW(log2_binomial(0, 0), std::invalid_argument);
  EXPECT_THROW(log2_binomial(5, 6), std::invalid_argument);
  EXPECT_THROW(log2_binomial(5, -1), std::invalid_argument);
}

TEST(FiniteDiff, QuadraticGradient) {
  const ScalarLoss f = [](std::span<const double> w) { return 3.0 * w[0] * w[0] + w[0] * w[1] - 2.0 * w[1]; };
  const std::vector<double> w{0.7, -1.3};
  const auto g = finite_diff_grad(f, w);
  EXPECT_NEAR(g[0], 6.0 * 0.7 - 1.3, 1e-8);
  EXPECT_NEAR(g[1], 0.7 - 2.0, 1e-8);
}

TEST(Vectors, DotAndNorm) {
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  EXPECT_EQ(dot(a, b), 12.0);
  EXPECT_EQ(squared_norm(a), 14.0);
}

TEST(RandomStream, SameSeedSameSequence) {
  RandomStream a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(RandomStream, DistributionMoments) {
  RandomStream rng(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, se = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    se += rng.exponential(2.5);
  }
  EXPECT_NEAR(su / n, 0.5, 5e-3);
  EXPECT_NEAR(sn / n, 0.0, 1e-2);
  EXPECT_NEAR(sn2 / n, 1.0, 1e-2);
  EXPECT_NEAR(se / n, 2.5, 3e-2);
}

TEST(RandomStream, UniformIndexInRangeAndCoversAll) {
  RandomStream rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto j = rng.uniform_index(7);
    ASSERT_LT(j, 7u);
    ++hits[j];
  }
  for (const int h : hits) EXPECT_GT(h, 800);
}

TEST(SeedSpec, LabelsGiveIndependentReproducibleStreams) {
  const SeedSpec s{11};
  EXPECT_EQ(s.derive("minibatch:0"), SeedSpec{11}.derive("minibatch:0"));
  EXPECT_NE(s.derive("minibatch:0"), s.derive("minibatch:1"));
  EXPECT_NE(s.derive("minibatch:0"), SeedSpec{12}.derive("minibatch:0"));
  auto a = s.stream("x");
  auto b = s.stream("x");
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SampleWithoutReplacement, DistinctSubset) {
  std::vector<std::size_t> pop(50);
  for (std::size_t i = 0; i < pop.size(); ++i) pop[i] = 100 + i;
  RandomStream rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = sample_without_replacement(pop, 20, rng);
    ASSERT_EQ(s.size(), 20u);
    const std::set<std::size_t> uniq(s.begin(), s.end());
    EXPECT_EQ(uniq.size(), 20u);
    for (const auto v : s) EXPECT_TRUE(v >= 100 && v < 150);
  }
  EXPECT_EQ(sample_without_replacement(pop, 50, rng).size(), 50u);
}

TEST(GoldenSection, FindsParabolaMinimum) {
  const double x = golden_section_min([](double t) { return (t - 2.37) * (t - 2.37) + 1.0; }, -10.0, 10.0);
  EXPECT_NEAR(x, 2.37, 1e-7);
  // minimum on the boundary
  EXPECT_NEAR(golden_section_min([](double t) { return t; }, 1.0, 5.0), 1.0, 1e-9);
}

}  // namespace
