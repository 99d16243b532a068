#include "flexspar/taskdata.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace flexspar {

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

struct MlpView {
  std::size_t dim;
  std::span<const double> w;
  double weight(std::size_t j, std::size_t k) const { return w[j * dim + k]; }
  double bias(std::size_t j) const { return w[kMlpHidden * dim + j]; }
  double out(std::size_t j) const { return w[kMlpHidden * dim + kMlpHidden + j]; }
  double out_bias() const { return w[kMlpHidden * dim + 2 * kMlpHidden]; }
};

// Model output z(x; w) for the classifiers, hidden activations written to `hidden`.
double classifier_output(const LossModel& model, std::span<const double> w,
                         std::span<const double> x, std::array<double, kMlpHidden>& hidden) {
  if (model.kind == LossKind::logistic) return dot(x, w);
  const MlpView v{model.feature_dim, w};
  double z = v.out_bias();
  for (std::size_t j = 0; j < kMlpHidden; ++j) {
    double a = v.bias(j);
    for (std::size_t k = 0; k < v.dim; ++k) a += v.weight(j, k) * x[k];
    hidden[j] = std::tanh(a);
    z += v.out(j) * hidden[j];
  }
  return z;
}

// Adds the gradient of one sample's loss (scaled by `scale`) to grad, returns the loss.
double accumulate_sample(const LossModel& model, std::span<const double> w, std::span<const double> x,
                         double y, double scale, std::span<double> grad) {
  if (model.kind == LossKind::least_squares) {
    const double r = dot(x, w) - y;
    if (!grad.empty()) {
      const double c = scale * r;
      for (std::size_t k = 0; k < x.size(); ++k) grad[k] += c * x[k];
    }
    return 0.5 * r * r;
  }
  std::array<double, kMlpHidden> hidden{};
  const double z = classifier_output(model, w, x, hidden);
  const double s = y > 0.5 ? 1.0 : -1.0;
  const double loss = softplus(-s * z);
  if (grad.empty()) return loss;
  const double dz = -s * sigmoid(-s * z) * scale;
  if (model.kind == LossKind::logistic) {
    for (std::size_t k = 0; k < x.size(); ++k) grad[k] += dz * x[k];
    return loss;
  }
  const std::size_t dim = model.feature_dim;
  const MlpView v{dim, w};
  for (std::size_t j = 0; j < kMlpHidden; ++j) {
    const double dh = dz * v.out(j) * (1.0 - hidden[j] * hidden[j]);
    for (std::size_t k = 0; k < dim; ++k) grad[j * dim + k] += dh * x[k];
    grad[kMlpHidden * dim + j] += dh;
    grad[kMlpHidden * dim + kMlpHidden + j] += dz * hidden[j];
  }
  grad[kMlpHidden * dim + 2 * kMlpHidden] += dz;
  return loss;
}

ParamVector shard_gradient(const LossModel& model, std::span<const double> w,
                           std::span<const std::size_t> shard, const Dataset& ds) {
  return loss_and_grad(model, w, shard, ds).grad;
}

double power_iteration_gram(const Dataset& ds, std::span<const std::size_t> rows) {
  const std::size_t d = ds.dim;
  std::vector<double> gram(d * d, 0.0);
  for (const std::size_t i : rows) {
    const auto x = ds.row(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) gram[a * d + b] += x[a] * x[b];
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (double& g : gram) g *= inv_n;

  std::vector<double> v(d), next(d);
  for (std::size_t a = 0; a < d; ++a) v[a] = 1.0 + 0.01 * static_cast<double>(a);
  double lambda = 0.0;
  for (int iter = 0; iter < 5000; ++iter) {
    const double nv = std::sqrt(squared_norm(v));
    for (double& c : v) c /= nv;
    for (std::size_t a = 0; a < d; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < d; ++b) acc += gram[a * d + b] * v[b];
      next[a] = acc;
    }
    const double updated = dot(v, next);
    v.swap(next);
    if (iter > 10 && std::abs(updated - lambda) <= 1e-14 * std::abs(updated)) {
      lambda = updated;
      break;
    }
    lambda = updated;
  }
  return lambda;
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::least_squares: return "least_squares";
    case LossKind::logistic: return "logistic";
    case LossKind::mlp1: return "mlp1";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "least_squares") return LossKind::least_squares;
  if (name == "logistic") return LossKind::logistic;
  if (name == "mlp1") return LossKind::mlp1;
  throw std::invalid_argument("unknown loss kind '" + name + "'");
}

std::size_t LossModel::param_dim() const {
  if (kind == LossKind::mlp1) return kMlpHidden * feature_dim + 2 * kMlpHidden + 1;
  return feature_dim;
}

Dataset make_synthetic(const LossModel& model, std::size_t n_samples, const SeedSpec& seed,
                       const SyntheticOptions& options) {
  if (n_samples == 0 || model.feature_dim == 0) {
    throw std::invalid_argument("make_synthetic: sample count and dimension must be positive");
  }
  if (!(options.noise >= 0.0)) throw std::invalid_argument("make_synthetic: negative noise");
  if (model.is_classifier() && options.noise > 0.5) {
    throw std::invalid_argument("make_synthetic: label flip probability must be <= 0.5");
  }
  Dataset ds;
  ds.dim = model.feature_dim;
  ds.features.resize(n_samples * ds.dim);
  ds.labels.resize(n_samples);

  auto planted_rng = seed.stream("data:planted");
  ds.planted.resize(model.param_dim());
  if (model.kind == LossKind::mlp1) {
    const double scale = 2.0 / std::sqrt(static_cast<double>(ds.dim));
    for (std::size_t i = 0; i < kMlpHidden * ds.dim; ++i) ds.planted[i] = scale * planted_rng.normal();
    for (std::size_t j = 0; j < kMlpHidden; ++j) ds.planted[kMlpHidden * ds.dim + j] = 0.5 * planted_rng.normal();
    for (std::size_t j = 0; j < kMlpHidden; ++j)
      ds.planted[kMlpHidden * ds.dim + kMlpHidden + j] = planted_rng.normal();
  } else {
    for (double& p : ds.planted) p = planted_rng.normal();
  }

  auto feature_rng = seed.stream("data:features");
  for (double& f : ds.features) f = feature_rng.normal();

  auto label_rng = seed.stream("data:labels");
  if (model.kind == LossKind::least_squares) {
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double noise = options.noise > 0.0 ? options.noise * label_rng.normal() : 0.0;
      ds.labels[i] = dot(ds.row(i), ds.planted) + noise;
    }
    return ds;
  }

  std::vector<double> z(n_samples);
  std::array<double, kMlpHidden> hidden{};
  for (std::size_t i = 0; i < n_samples; ++i) z[i] = classifier_output(model, ds.planted, ds.row(i), hidden);
  if (model.kind == LossKind::mlp1) {
    // centre the planted output so the classes are balanced
    std::vector<double> sorted = z;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_samples / 2), sorted.end());
    const double median = sorted[n_samples / 2];
    ds.planted.back() = -median;
    for (double& zi : z) zi -= median;
  }
  for (std::size_t i = 0; i < n_samples; ++i) {
    bool label = z[i] > 0.0;
    if (options.noise > 0.0 && label_rng.uniform() < options.noise) label = !label;
    ds.labels[i] = label ? 1.0 : 0.0;
  }
  return ds;
}

Partition partition(const Dataset& ds, std::size_t num_shards, double skew, const SeedSpec& seed) {
  const std::size_t n = ds.size();
  if (num_shards == 0) throw std::invalid_argument("partition: need at least one shard");
  if (num_shards > n) {
    throw std::invalid_argument("partition: " + std::to_string(num_shards) + " shards for " +
                                std::to_string(n) + " samples");
  }
  if (!(skew >= 0.0 && skew <= 1.0)) throw std::invalid_argument("partition: skew must lie in [0, 1]");

  auto rng = seed.stream("partition");
  std::vector<double> tie(n), mix(n);
  for (std::size_t i = 0; i < n; ++i) tie[i] = rng.uniform();
  for (std::size_t i = 0; i < n; ++i) mix[i] = rng.uniform();

  std::vector<std::size_t> by_label(n);
  std::iota(by_label.begin(), by_label.end(), std::size_t{0});
  std::sort(by_label.begin(), by_label.end(), [&](std::size_t a, std::size_t b) {
    if (ds.labels[a] != ds.labels[b]) return ds.labels[a] < ds.labels[b];
    if (tie[a] != tie[b]) return tie[a] < tie[b];
    return a < b;
  });
  std::vector<double> key(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = by_label[r];
    const double label_pos = static_cast<double>(r) / static_cast<double>(n);
    key[i] = skew * label_pos + (1.0 - skew) * mix[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return key[a] < key[b] || (key[a] == key[b] && a < b);
  });

  Partition part;
  part.skew = skew;
  part.shards.resize(num_shards);
  const std::size_t base = n / num_shards;
  const std::size_t extra = n % num_shards;
  std::size_t cursor = 0;
  for (std::size_t m = 0; m < num_shards; ++m) {
    const std::size_t len = base + (m < extra ? 1 : 0);
    auto& shard = part.shards[m];
    shard.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                 order.begin() + static_cast<std::ptrdiff_t>(cursor + len));
    std::sort(shard.begin(), shard.end());
    cursor += len;
  }
  return part;
}

LossGrad loss_and_grad(const LossModel& model, std::span<const double> w,
                       std::span<const std::size_t> batch, const Dataset& ds) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  LossGrad out;
  out.grad.assign(w.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const std::size_t i : batch) {
    loss += accumulate_sample(model, w, ds.row(i), ds.labels[i], scale, out.grad);
  }
  out.loss = loss * scale;
  return out;
}

double batch_loss(const LossModel& model, std::span<const double> w,
                  std::span<const std::size_t> batch, const Dataset& ds) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double loss = 0.0;
  for (const std::size_t i : batch) loss += accumulate_sample(model, w, ds.row(i), ds.labels[i], 0.0, {});
  return loss / static_cast<double>(batch.size());
}

double global_loss(const LossModel& model, std::span<const double> w, const Dataset& ds,
                   const Partition& part) {
  double acc = 0.0;
  for (const auto& shard : part.shards) acc += batch_loss(model, w, shard, ds);
  return acc / static_cast<double>(part.num_shards());
}

double accuracy(const LossModel& model, std::span<const double> w, const Dataset& ds) {
  if (!model.is_classifier()) throw std::invalid_argument("accuracy: least_squares is not a classifier");
  std::array<double, kMlpHidden> hidden{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool predicted = classifier_output(model, w, ds.row(i), hidden) > 0.0;
    if (predicted == (ds.labels[i] > 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double optimal_loss_lower_bound(const LossModel& model, const Dataset& ds, const Partition& part) {
  if (model.kind != LossKind::least_squares) return 0.0;
  const auto d = static_cast<Eigen::Index>(ds.dim);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  const double inv_m = 1.0 / static_cast<double>(part.num_shards());
  for (const auto& shard : part.shards) {
    const double weight = inv_m / static_cast<double>(shard.size());
    for (const std::size_t i : shard) {
      const Eigen::Map<const Eigen::VectorXd> x(ds.row(i).data(), d);
      hess.noalias() += weight * x * x.transpose();
      rhs.noalias() += weight * ds.labels[i] * x;
    }
  }
  const Eigen::VectorXd w = hess.ldlt().solve(rhs);
  const ParamVector wv(w.data(), w.data() + w.size());
  return std::max(0.0, global_loss(model, wv, ds, part));
}

ProblemConstants estimate_constants(const LossModel& model, const Dataset& ds,
                                    const Partition& part, const ConstantsProbe& probe,
                                    const SeedSpec& seed) {
  const std::size_t p = model.param_dim();
  std::vector<ParamVector> points = probe.points;
  auto rng = seed.stream("constants:probe");
  if (points.empty()) {
    points.resize(std::max<std::size_t>(probe.probe_count, 1));
    for (auto& pt : points) {
      pt.resize(p);
      for (double& c : pt) c = rng.normal();
    }
  }

  ProblemConstants out;
  if (model.kind == LossKind::least_squares) {
    for (const auto& shard : part.shards) out.L = std::max(out.L, power_iteration_gram(ds, shard));
  } else {
    const std::size_t pairs = std::max<std::size_t>(probe.probe_count, 1);
    ParamVector other(p);
    for (std::size_t q = 0; q < pairs; ++q) {
      const auto& base = points[q % points.size()];
      const double radius = (q % 2 == 0) ? 0.05 : 1.0;
      for (std::size_t c = 0; c < p; ++c) other[c] = base[c] + radius * rng.normal();
      double dist2 = 0.0;
      for (std::size_t c = 0; c < p; ++c) dist2 += (base[c] - other[c]) * (base[c] - other[c]);
      if (dist2 == 0.0) continue;
      for (const auto& shard : part.shards) {
        const auto g1 = shard_gradient(model, base, shard, ds);
        const auto g2 = shard_gradient(model, other, shard, ds);
        double diff2 = 0.0;
        for (std::size_t c = 0; c < p; ++c) diff2 += (g1[c] - g2[c]) * (g1[c] - g2[c]);
        out.L = std::max(out.L, std::sqrt(diff2 / dist2));
      }
    }
  }

  double sigma2 = 0.0;
  double g2max = 0.0;
  ParamVector gi(p);
  for (const auto& pt : points) {
    for (const auto& shard : part.shards) {
      const auto mean = shard_gradient(model, pt, shard, ds);
      double var = 0.0;
      double second = 0.0;
      for (const std::size_t i : shard) {
        std::fill(gi.begin(), gi.end(), 0.0);
        accumulate_sample(model, pt, ds.row(i), ds.labels[i], 1.0, gi);
        for (std::size_t c = 0; c < p; ++c) {
          var += (gi[c] - mean[c]) * (gi[c] - mean[c]);
          second += gi[c] * gi[c];
        }
      }
      const double inv = 1.0 / static_cast<double>(shard.size());
      sigma2 = std::max(sigma2, var * inv);
      g2max = std::max(g2max, second * inv);
    }
  }
  out.sigma = std::sqrt(sigma2);
  out.G = std::max(std::sqrt(g2max), out.sigma);
  return out;
}

void write_csv(std::ostream& out, const Dataset& ds) {
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.row(i);
    for (std::size_t k = 0; k < ds.dim; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", x[k]);
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", ds.labels[i]);
    out << buf << "\r\n";
  }
}

Dataset read_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        throw std::invalid_argument("read_csv: bad number on line " + std::to_string(line_no));
      }
      values.push_back(v);
    }
    if (values.size() < 2) throw std::invalid_argument("read_csv: need features and a label");
    const std::size_t dim = values.size() - 1;
    if (ds.dim == 0) ds.dim = dim;
    if (dim != ds.dim) throw std::invalid_argument("read_csv: ragged row on line " + std::to_string(line_no));
    ds.features.insert(ds.features.end(), values.begin(), values.end() - 1);
    ds.labels.push_back(values.back());
  }
  if (ds.size() == 0) throw std::invalid_argument("read_csv: no samples");
  return ds;
}

}  // namespace flexspar
