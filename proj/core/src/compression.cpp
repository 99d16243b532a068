#include "flexspar/compression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace flexspar {

namespace {

void check_fpp(int fpp) {
  if (fpp != 32 && fpp != 64) {
    throw std::invalid_argument("floating-point precision must be 32 or 64, got " +
                                std::to_string(fpp));
  }
}

void check_overheads(double s0, double s1) {
  if (!(s0 >= 0.0) || !(s1 >= 0.0)) {
    throw std::invalid_argument("payload overhead coefficients must be non-negative");
  }
}

}  // namespace

SparsityLevel::SparsityLevel(double delta, std::size_t dim) : delta_(delta), dim_(dim) {
  if (dim == 0) throw std::invalid_argument("SparsityLevel: dimension must be positive");
  if (!(delta >= 1.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("SparsityLevel: delta must be >= 1, got " + std::to_string(delta));
  }
  const double raw = std::round(static_cast<double>(dim) / delta);
  k_ = static_cast<std::size_t>(std::clamp(raw, 1.0, static_cast<double>(dim)));
}

SparsityLevel SparsityLevel::from_k(std::size_t k, std::size_t dim) {
  if (k == 0 || k > dim) throw std::invalid_argument("SparsityLevel::from_k: k out of range");
  return SparsityLevel(static_cast<double>(dim) / static_cast<double>(k), dim);
}

std::vector<std::size_t> top_k_support(std::span<const double> x, std::size_t k) {
  const std::size_t d = x.size();
  if (k < 1 || k > d) {
    throw std::invalid_argument("top_k: k must lie in [1, " + std::to_string(d) + "], got " +
                                std::to_string(k));
  }
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k < d) {
    // strict total order: magnitude descending, then index ascending
    const auto before = [&x](std::size_t a, std::size_t b) {
      const double ma = std::abs(x[a]);
      const double mb = std::abs(x[b]);
      return ma > mb || (ma == mb && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(),
                     before);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

ParamVector top_k(std::span<const double> x, std::size_t k) {
  const auto support = top_k_support(x, k);
  if (k == x.size()) return ParamVector(x.begin(), x.end());
  ParamVector out(x.size(), 0.0);
  for (const std::size_t i : support) out[i] = x[i];
  return out;
}

PayloadSize payload_exact(const SparsityLevel& level, int fpp, double s0, double s1) {
  check_fpp(fpp);
  check_overheads(s0, s1);
  PayloadSize p;
  p.bits_values = static_cast<double>(fpp + 1) * static_cast<double>(level.k());
  p.bits_positions = log2_binomial(static_cast<std::int64_t>(level.dim()),
                                   static_cast<std::int64_t>(level.k()));
  p.bits_total = s1 * (p.bits_values + p.bits_positions) + s0;
  return p;
}

double payload_approx(double delta, std::size_t dim, int fpp, double s0, double s1) {
  check_fpp(fpp);
  const double kappa = static_cast<double>(fpp + 1);
  return s1 * (static_cast<double>(dim) / delta) * (std::log2(delta) + kappa) + s0;
}

double payload_approx(const SparsityLevel& level, int fpp, double s0, double s1) {
  check_overheads(s0, s1);
  return payload_approx(level.effective_delta(), level.dim(), fpp, s0, s1);
}

}  // namespace flexspar
