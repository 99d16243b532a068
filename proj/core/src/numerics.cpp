#include "flexspar/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace flexspar {

namespace {

constexpr double kInvE = 0.36787944117144232159552377016146;
constexpr double kEps = std::numeric_limits<double>::epsilon();

double halley(double x, double w) {
  for (int iter = 0; iter < 64; ++iter) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0 || f == 0.0) return w;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double next = w - f / denom;
    if (!std::isfinite(next)) return w;
    const double step = std::abs(next - w);
    w = next;
    if (step <= 4.0 * kEps * std::max(1.0, std::abs(w))) break;
  }
  return w;
}

double branch_point_series(double x, double sign) {
  // p = sqrt(2 (e x + 1)); W = -1 + p - p^2/3 + 11/72 p^3 (sign flips p on W-1)
  const double p = sign * std::sqrt(std::max(0.0, 2.0 * (std::numbers::e * x + 1.0)));
  return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double lambert_w(double x, WBranch branch) {
  if (std::isnan(x)) throw std::domain_error("lambert_w: NaN argument");
  const double slack = 8.0 * kEps * kInvE;
  if (x < -kInvE) {
    if (x >= -kInvE - slack) return -1.0;
    throw std::domain_error("lambert_w: argument below -1/e (" + std::to_string(x) + ")");
  }
  if (x == -kInvE) return -1.0;

  if (branch == WBranch::principal) {
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return x;
    double w0;
    if (x < -0.3) {
      w0 = branch_point_series(x, 1.0);
    } else if (std::abs(x) < 1e-3) {
      w0 = x - x * x + 1.5 * x * x * x;
    } else if (x < 3.0) {
      const double l = std::log1p(x);
      w0 = l * (1.0 - std::log1p(l) / (2.0 + l));
    } else {
      const double l1 = std::log(x);
      const double l2 = std::log(l1);
      w0 = l1 - l2 + l2 / l1;
    }
    return halley(x, w0);
  }

  if (x >= 0.0) {
    throw std::domain_error("lambert_w: lower branch requires -1/e <= x < 0 (" +
                            std::to_string(x) + ")");
  }
  double w0;
  if (x < -0.25) {
    w0 = branch_point_series(x, -1.0);
  } else {
    const double l1 = std::log(-x);
    const double l2 = std::log(-l1);
    w0 = l1 - l2 + l2 / l1;
  }
  return halley(x, w0);
}

double log2_binomial(std::int64_t d, std::int64_t k) {
  if (d < 1 || k < 0 || k > d) {
    throw std::invalid_argument("log2_binomial: need d >= 1 and 0 <= k <= d (d=" +
                                std::to_string(d) + ", k=" + std::to_string(k) + ")");
  }
  const std::int64_t j = std::min(k, d - k);
  // log C(d, j) = sum_{i=1..j} log((d - j + i) / i), Neumaier-compensated.
  double sum = 0.0;
  double comp = 0.0;
  for (std::int64_t i = 1; i <= j; ++i) {
    const double term =
        std::log(static_cast<double>(d - j + i) / static_cast<double>(i));
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      comp += (sum - t) + term;
    } else {
      comp += (term - t) + sum;
    }
    sum = t;
  }
  return (sum + comp) / std::numbers::ln2;
}

ParamVector finite_diff_grad(const ScalarLoss& loss, std::span<const double> w, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  ParamVector probe(w.begin(), w.end());
  ParamVector grad(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss(probe);
    probe[i] = orig - h;
    const double down = loss(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double RandomStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(uniform_open_zero()));
  const double theta = 2.0 * std::numbers::pi * uniform();
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t RandomStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

std::uint64_t SeedSpec::derive(std::string_view label) const {
  return splitmix64(splitmix64(master_seed) ^ fnv1a(label));
}

RandomStream SeedSpec::stream(std::string_view label) const {
  return RandomStream(derive(label));
}

std::vector<std::size_t> sample_without_replacement(std::span<const std::size_t> population,
                                                    std::size_t count, RandomStream& rng) {
  if (count > population.size()) {
    throw std::invalid_argument("sample_without_replacement: count exceeds population");
  }
  std::vector<std::size_t> pool(population.begin(), population.end());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double rel_tol, int max_iter) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < max_iter && (b - a) > rel_tol * (std::abs(a) + std::abs(b)); ++i) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double mid = 0.5 * (a + b);
  // the ends of the original bracket may beat the interior for monotone f
  double best = mid;
  double fbest = f(mid);
  for (const double cand : {lo, hi}) {
    const double fv = f(cand);
    if (fv < fbest) {
      fbest = fv;
      best = cand;
    }
  }
  return best;
}

}  // namespace flexspar
