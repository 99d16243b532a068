#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "flexspar/taskdata.hpp"

namespace {

using namespace flexspar;

std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

class LossKinds : public ::testing::TestWithParam<LossKind> {};

TEST_P(LossKinds, GradientMatchesFiniteDifference) {
  const LossModel model{GetParam(), 6};
  const SeedSpec seed{9};
  const auto ds = make_synthetic(model, 40, seed, SyntheticOptions{0.1});
  auto rng = seed.stream("test:point");
  ParamVector w(model.param_dim());
  for (double& c : w) c = 0.3 * rng.normal();
  std::vector<std::size_t> batch{0, 3, 5, 17, 22, 39};
  const auto lg = loss_and_grad(model, w, batch, ds);
  const ScalarLoss f = [&](std::span<const double> v) { return batch_loss(model, v, batch, ds); };
  const auto fd = finite_diff_grad(f, w, 1e-6);
  ASSERT_EQ(lg.grad.size(), fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(lg.grad[i], fd[i], 1e-7 * std::max(1.0, std::abs(fd[i])));
  EXPECT_DOUBLE_EQ(lg.loss, batch_loss(model, w, batch, ds));
}

INSTANTIATE_TEST_SUITE_P(AllKinds, LossKinds,
                         ::testing::Values(LossKind::least_squares, LossKind::logistic, LossKind::mlp1));

TEST(LossModel, NamesAndDimensions) {
  EXPECT_EQ(loss_kind_from_string("logistic"), LossKind::logistic);
  EXPECT_EQ(to_string(LossKind::mlp1), "mlp1");
  EXPECT_THROW(loss_kind_from_string("svm"), std::invalid_argument);
  EXPECT_EQ((LossModel{LossKind::least_squares, 7}.param_dim()), 7u);
  EXPECT_EQ((LossModel{LossKind::mlp1, 7}.param_dim()), kMlpHidden * 7 + 2 * kMlpHidden + 1);
}

TEST(Synthetic, DeterministicAndNoiseFreeLabelsFollowPlantedModel) {
  const LossModel model{LossKind::least_squares, 5};
  const auto a = make_synthetic(model, 100, SeedSpec{4});
  const auto b = make_synthetic(model, 100, SeedSpec{4});
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.labels[i], dot(a.row(i), a.planted), 1e-12);

  const LossModel clf{LossKind::logistic, 5};
  const auto c = make_synthetic(clf, 500, SeedSpec{4});
  EXPECT_DOUBLE_EQ(accuracy(clf, c.planted, c), 1.0);
  EXPECT_THROW(make_synthetic(clf, 10, SeedSpec{1}, SyntheticOptions{0.7}), std::invalid_argument);
  EXPECT_THROW(accuracy(model, a.planted, a), std::invalid_argument);
}

TEST(Partition, PropertyDisjointCoverBalanced) {
  RandomStream gen(17);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 20 + gen.uniform_index(300);
    const std::size_t m = 1 + gen.uniform_index(12);
    const double skew = gen.uniform();
    const auto ds = make_synthetic(LossModel{LossKind::logistic, 3}, n, SeedSpec{static_cast<std::uint64_t>(rep)});
    const auto part = partition(ds, m, skew, SeedSpec{static_cast<std::uint64_t>(rep)});
    ASSERT_EQ(part.num_shards(), m);
    std::set<std::size_t> seen;
    std::size_t lo = n, hi = 0;
    for (const auto& s : part.shards) {
      lo = std::min(lo, s.size());
      hi = std::max(hi, s.size());
      for (const auto i : s) EXPECT_TRUE(seen.insert(i).second);
    }
    EXPECT_EQ(seen.size(), n);
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Partition, FullSkewSeparatesLabels) {
  const auto ds = make_synthetic(LossModel{LossKind::logistic, 4}, 400, SeedSpec{2});
  const auto part = partition(ds, 4, 1.0, SeedSpec{2});
  const auto frac_pos = [&](const std::vector<std::size_t>& s) {
    double c = 0;
    for (const auto i : s) c += ds.labels[i];
    return c / static_cast<double>(s.size());
  };
  EXPECT_LT(frac_pos(part.shards.front()), 0.05);
  EXPECT_GT(frac_pos(part.shards.back()), 0.95);
  EXPECT_THROW(partition(ds, 0, 0.5, SeedSpec{1}), std::invalid_argument);
  EXPECT_THROW(partition(ds, 401, 0.5, SeedSpec{1}), std::invalid_argument);
  EXPECT_THROW(partition(ds, 2, 1.5, SeedSpec{1}), std::invalid_argument);
}

TEST(Constants, LeastSquaresSmoothnessMatchesEigenSolver) {
  const LossModel model{LossKind::least_squares, 8};
  const auto ds = make_synthetic(model, 120, SeedSpec{5}, SyntheticOptions{0.1});
  const auto part = partition(ds, 3, 0.3, SeedSpec{5});
  double expected = 0.0;
  for (const auto& s : part.shards) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(8, 8);
    for (const auto i : s) {
      const Eigen::Map<const Eigen::VectorXd> x(ds.row(i).data(), 8);
      gram += x * x.transpose();
    }
    gram /= static_cast<double>(s.size());
    expected = std::max(expected, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff());
  }
  ConstantsProbe probe;
  probe.points = {ParamVector(8, 0.0)};
  const auto k = estimate_constants(model, ds, part, probe, SeedSpec{5});
  EXPECT_NEAR(k.L, expected, 1e-9 * expected);
}

TEST(Constants, SigmaAndGMatchDirectComputation) {
  const LossModel model{LossKind::logistic, 4};
  const auto ds = make_synthetic(model, 60, SeedSpec{6}, SyntheticOptions{0.1});
  const auto part = partition(ds, 2, 0.0, SeedSpec{6});
  const ParamVector pt{0.2, -0.1, 0.4, 0.0};
  ConstantsProbe probe;
  probe.points = {pt};
  probe.probe_count = 4;
  const auto k = estimate_constants(model, ds, part, probe, SeedSpec{6});

  double var_max = 0.0, sec_max = 0.0;
  for (const auto& s : part.shards) {
    const auto mean = loss_and_grad(model, pt, s, ds).grad;
    double var = 0.0, sec = 0.0;
    for (const auto i : s) {
      const std::vector<std::size_t> one{i};
      const auto g = loss_and_grad(model, pt, one, ds).grad;
      for (std::size_t c = 0; c < g.size(); ++c) {
        var += (g[c] - mean[c]) * (g[c] - mean[c]);
        sec += g[c] * g[c];
      }
    }
    var_max = std::max(var_max, var / static_cast<double>(s.size()));
    sec_max = std::max(sec_max, sec / static_cast<double>(s.size()));
  }
  EXPECT_NEAR(k.sigma, std::sqrt(var_max), 1e-12);
  EXPECT_NEAR(k.G, std::max(std::sqrt(sec_max), std::sqrt(var_max)), 1e-12);
  EXPECT_GT(k.L, 0.0);
  // logistic loss Hessian is at most (1/4) lambda_max(X^T X / n)
  const auto ls = estimate_constants(LossModel{LossKind::least_squares, 4}, ds, part, probe, SeedSpec{6});
  EXPECT_LE(k.L, 0.25 * ls.L * (1.0 + 1e-9));
}

TEST(OptimalLoss, ExactForLeastSquaresAndZeroForClassifiers) {
  const LossModel model{LossKind::least_squares, 5};
  const auto ds = make_synthetic(model, 90, SeedSpec{8}, SyntheticOptions{0.3});
  const auto part = partition(ds, 3, 0.5, SeedSpec{8});
  const double fstar = optimal_loss_lower_bound(model, ds, part);
  EXPECT_GT(fstar, 0.0);
  EXPECT_LE(fstar, global_loss(model, ds.planted, ds, part));
  RandomStream rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    ParamVector w = ds.planted;
    for (double& c : w) c += 0.05 * rng.normal();
    EXPECT_LE(fstar, global_loss(model, w, ds, part) + 1e-12);
  }
  EXPECT_EQ(optimal_loss_lower_bound(LossModel{LossKind::logistic, 5}, ds, part), 0.0);
}

TEST(GlobalLoss, AveragesShardsUniformly) {
  const LossModel model{LossKind::least_squares, 3};
  const auto ds = make_synthetic(model, 31, SeedSpec{3}, SyntheticOptions{0.2});
  const auto part = partition(ds, 2, 0.0, SeedSpec{3});
  const ParamVector w{0.1, 0.2, 0.3};
  const double expected =
      0.5 * (batch_loss(model, w, part.shards[0], ds) + batch_loss(model, w, part.shards[1], ds));
  EXPECT_DOUBLE_EQ(global_loss(model, w, ds, part), expected);
  EXPECT_THROW(loss_and_grad(model, w, std::vector<std::size_t>{}, ds), std::invalid_argument);
}

TEST(Csv, RoundTripIsExact) {
  const auto ds = make_synthetic(LossModel{LossKind::least_squares, 4}, 25, SeedSpec{1}, SyntheticOptions{0.1});
  std::stringstream ss;
  write_csv(ss, ds);
  const auto back = read_csv(ss);
  EXPECT_EQ(back.dim, ds.dim);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  std::stringstream bad("1,2,3\r\n1,2\r\n");
  EXPECT_THROW(read_csv(bad), std::invalid_argument);
  std::stringstream junk("1,x\r\n");
  EXPECT_THROW(read_csv(junk), std::invalid_argument);
  EXPECT_EQ(all_rows(ds).size(), 25u);
}

}  // namespace
