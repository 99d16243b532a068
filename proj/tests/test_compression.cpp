#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <gtest/gtest.h>

#include "flexspar/compression.hpp"

namespace {

using namespace flexspar;

// Reference top-k: full stable sort by magnitude.
ParamVector top_k_by_sort(const std::vector<double>& x, std::size_t k) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(x[a]) > std::abs(x[b]); });
  ParamVector out(x.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) out[idx[i]] = x[idx[i]];
  return out;
}

std::vector<double> random_vector(RandomStream& rng, std::size_t d) {
  std::vector<double> x(d);
  // mix of scales and exact ties so the tie rule is exercised
  for (auto& v : x) v = rng.uniform() < 0.1 ? std::round(rng.normal()) : rng.normal() * std::exp(3.0 * rng.normal());
  return x;
}

TEST(SparsityLevel, RoundsAndClampsK) {
  EXPECT_EQ(SparsityLevel(4.0, 100).k(), 25u);
  EXPECT_EQ(SparsityLevel(3.0, 100).k(), 33u);
  EXPECT_EQ(SparsityLevel(2.0 * 100.0 / 67.0, 100).k(), 34u);  // 33.5 rounds away from zero
  EXPECT_EQ(SparsityLevel(1000.0, 100).k(), 1u);
  EXPECT_EQ(SparsityLevel(1.0, 100).k(), 100u);
  EXPECT_DOUBLE_EQ(SparsityLevel(3.0, 100).effective_delta(), 100.0 / 33.0);
  EXPECT_EQ(SparsityLevel::from_k(7, 70).k(), 7u);
  EXPECT_THROW(SparsityLevel(0.5, 10), std::invalid_argument);
  EXPECT_THROW(SparsityLevel(2.0, 0), std::invalid_argument);
  EXPECT_THROW(SparsityLevel::from_k(0, 10), std::invalid_argument);
}

TEST(TopK, MatchesStableSortReference) {
  RandomStream rng(1);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t d = 1 + rng.uniform_index(80);
    const std::size_t k = 1 + rng.uniform_index(d);
    const auto x = random_vector(rng, d);
    EXPECT_EQ(top_k(x, k), top_k_by_sort(x, k));
  }
}

TEST(TopK, TiesKeepLowerIndex) {
  const std::vector<double> x{1.0, -2.0, 2.0, 0.5, -2.0};
  EXPECT_EQ(top_k_support(x, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k(x, 1), (ParamVector{0.0, -2.0, 0.0, 0.0, 0.0}));
}

TEST(TopK, FullKIsIdentityAndBadKThrows) {
  const std::vector<double> x{3.0, -1.0, 0.0};
  EXPECT_EQ(top_k(x, 3), x);
  EXPECT_THROW(top_k(x, 0), std::invalid_argument);
  EXPECT_THROW(top_k(x, 4), std::invalid_argument);
}

TEST(TopK, ContractionProperty) {
  RandomStream rng(2);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t d = 1 + rng.uniform_index(300);
    const std::size_t k = 1 + rng.uniform_index(d);
    const auto x = random_vector(rng, d);
    const auto c = top_k(x, k);
    double resid = 0.0;
    for (std::size_t i = 0; i < d; ++i) resid += (x[i] - c[i]) * (x[i] - c[i]);
    const double bound = (1.0 - static_cast<double>(k) / static_cast<double>(d)) * squared_norm(x);
    EXPECT_LE(resid, bound * (1.0 + 1e-12)) << "d=" << d << " k=" << k;
  }
}

TEST(TopK, SupportIsSortedAndSized) {
  RandomStream rng(4);
  const auto x = random_vector(rng, 64);
  const auto s = top_k_support(x, 10);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
}

TEST(Payload, ExactMatchesBigIntegerCount) {
  namespace mp = boost::multiprecision;
  const SparsityLevel lvl(8.0, 400);  // k = 50
  mp::cpp_int c = 1;
  for (int i = 1; i <= 50; ++i) {
    c *= 350 + i;
    c /= i;
  }
  const double positions = static_cast<double>(mp::log(mp::cpp_bin_float_50(c)) / mp::log(mp::cpp_bin_float_50(2)));
  const auto p = payload_exact(lvl, 32, 100.0, 2.0);
  EXPECT_DOUBLE_EQ(p.bits_values, 33.0 * 50.0);
  EXPECT_NEAR(p.bits_positions, positions, 1e-9);
  EXPECT_NEAR(p.bits_total, 2.0 * (33.0 * 50.0 + positions) + 100.0, 1e-8);
}

TEST(Payload, ApproxFormula) {
  EXPECT_DOUBLE_EQ(payload_approx(8.0, 400, 32, 10.0, 1.0), 50.0 * (3.0 + 33.0) + 10.0);
  EXPECT_DOUBLE_EQ(payload_approx(SparsityLevel(8.0, 400), 64, 0.0, 2.0), 2.0 * 50.0 * (3.0 + 65.0));
}

TEST(Payload, ApproxWithinFivePercentOnLogGrid) {
  const std::size_t d = 10000;
  const double lo = std::exp(1.5), hi = 1000.0;
  for (int i = 0; i < 200; ++i) {
    const double delta = lo * std::pow(hi / lo, i / 199.0);
    const SparsityLevel lvl(delta, d);
    const double exact = payload_exact(lvl, 32, 0.0, 1.0).bits_total;
    const double approx = payload_approx(lvl, 32, 0.0, 1.0);
    EXPECT_LT(std::abs(approx - exact) / exact, 0.05) << delta;
  }
}

TEST(Payload, RejectsBadPrecisionAndOverheads) {
  const SparsityLevel lvl(4.0, 40);
  EXPECT_THROW(payload_exact(lvl, 16, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(payload_exact(lvl, 32, -1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(payload_approx(lvl, 32, 0.0, -1.0), std::invalid_argument);
}

}  // namespace
