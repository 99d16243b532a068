#include "flexspar/energy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "flexspar/compression.hpp"

namespace flexspar {

void EnergyModel::validate() const {
  if (dim == 0) throw std::invalid_argument("energy model: dimension must be positive");
  if (fpp != 32 && fpp != 64) throw std::invalid_argument("energy model: fpp must be 32 or 64");
  if (!(s0 >= 0.0 && s1 >= 0.0)) throw std::invalid_argument("energy model: s0, s1 must be >= 0");
  if (!(c_alpha >= 0.0 && c_beta >= 0.0)) {
    throw std::invalid_argument("energy model: c_alpha, c_beta must be >= 0");
  }
  if (!(delta_lb >= std::exp(1.5) * (1.0 - 1e-12))) {
    throw std::invalid_argument("energy model: delta_lb must be at least e^{3/2}");
  }
  if (!(delta_ub >= delta_lb)) throw std::invalid_argument("energy model: delta_ub < delta_lb");
  if (h_candidates.empty()) throw std::invalid_argument("energy model: empty H candidate set");
  for (const int h : h_candidates) {
    if (h < 1) throw std::invalid_argument("energy model: H candidates must be positive integers");
  }
  if (devices.empty()) throw std::invalid_argument("energy model: no devices");
  for (const auto& dev : devices) {
    if (!(dev.tx_power_w >= 0.0) || !(dev.rate_bps > 0.0) || !(dev.compute_j_per_iter >= 0.0)) {
      throw std::invalid_argument("energy model: device power/rate/compute energy out of range");
    }
  }
}

bool EnergyModel::plan_feasible(const CompressionPlan& plan, double tol) const {
  if (plan.deltas.size() != devices.size()) return false;
  if (std::find(h_candidates.begin(), h_candidates.end(), plan.H) == h_candidates.end()) return false;
  return std::all_of(plan.deltas.begin(), plan.deltas.end(), [&](double d) {
    return d >= delta_lb * (1.0 - tol) && d <= delta_ub * (1.0 + tol);
  });
}

double mean_rate(double bandwidth_hz, const std::function<double()>& snr_sample, std::size_t n_samples) {
  if (n_samples == 0) throw std::invalid_argument("mean_rate: need at least one sample");
  double acc = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) acc += std::log2(1.0 + snr_sample());
  return bandwidth_hz * acc / static_cast<double>(n_samples);
}

double avg_rate(const ChannelParams& ch, std::size_t n_samples, const SeedSpec& seed) {
  if (const auto* fixed = std::get_if<FixedRate>(&ch.fading)) return fixed->bits_per_second;
  const auto& ray = std::get<RayleighFading>(ch.fading);
  if (!(ch.bandwidth_hz > 0.0 && ch.tx_power_w > 0.0 && ch.noise_power_w > 0.0 && ray.mean_gain > 0.0)) {
    throw std::invalid_argument("avg_rate: Rayleigh channel parameters must be positive");
  }
  auto rng = seed.stream("fading");
  const double snr_scale = ch.tx_power_w / ch.noise_power_w;
  return mean_rate(
      ch.bandwidth_hz, [&] { return snr_scale * rng.exponential(ray.mean_gain); }, n_samples);
}

double comm_energy(const DeviceEnergy& dev, double payload_bits) {
  if (!(payload_bits >= 0.0)) throw std::invalid_argument("comm_energy: negative payload");
  return dev.tx_power_w * payload_bits / dev.rate_bps;
}

double comp_energy_per_iter(const GpuParams& g) {
  if (!(g.core_freq_hz > 0.0 && g.mem_freq_hz > 0.0)) {
    throw std::invalid_argument("comp_energy_per_iter: frequencies must be positive");
  }
  const double power = g.static_power_w + g.alpha_mem * g.mem_freq_hz +
                       g.beta_core * g.core_voltage_v * g.core_voltage_v * g.core_freq_hz;
  const double time = g.static_time_s + g.a_mem / g.mem_freq_hz + g.b_core / g.core_freq_hz;
  return power * time;
}

DeviceEnergy resolve_device(const ChannelParams& ch, const GpuParams& gpu, std::size_t rate_samples,
                            const SeedSpec& seed) {
  return DeviceEnergy{ch.tx_power_w, avg_rate(ch, rate_samples, seed), comp_energy_per_iter(gpu)};
}

double round_payload_bits(double delta, const EnergyModel& em, PayloadMode mode) {
  const SparsityLevel level(delta, em.dim);
  if (mode == PayloadMode::exact) return payload_exact(level, em.fpp, em.s0, em.s1).bits_total;
  return payload_approx(delta, em.dim, em.fpp, em.s0, em.s1);
}

double round_energy(const CompressionPlan& plan, const EnergyModel& em, PayloadMode mode) {
  if (plan.deltas.size() != em.devices.size()) {
    throw std::invalid_argument("round_energy: plan has " + std::to_string(plan.deltas.size()) +
                                " sparsities for " + std::to_string(em.devices.size()) + " devices");
  }
  double total = 0.0;
  for (std::size_t m = 0; m < plan.deltas.size(); ++m) {
    const auto& dev = em.devices[m];
    total += comm_energy(dev, round_payload_bits(plan.deltas[m], em, mode)) +
             static_cast<double>(plan.H) * dev.compute_j_per_iter;
  }
  return total;
}

double rounds_factor(const CompressionPlan& plan, const EnergyModel& em, RoundsModel rounds) {
  const double M = static_cast<double>(plan.deltas.size());
  const double H = static_cast<double>(plan.H);
  if (rounds == RoundsModel::full_k) {
    if (!em.full_k) throw std::invalid_argument("full-K objective needs round-count constants");
    return rounds_K(rms_delta(plan.deltas), H, *em.full_k).K;
  }
  double sum_sq = 0.0;
  for (const double d : plan.deltas) sum_sq += d * d;
  return em.c_alpha * H * sum_sq + em.c_beta / (std::sqrt(M) * H);
}

double total_energy_objective(const CompressionPlan& plan, const EnergyModel& em, PayloadMode mode,
                              RoundsModel rounds) {
  return round_energy(plan, em, mode) * rounds_factor(plan, em, rounds);
}

RoundConstantsFit calibrate_round_constants(std::span<const PilotObservation> pilots) {
  // normal equations of rounds ~ c_alpha * x1 + c_beta * x2
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, r1 = 0.0, r2 = 0.0;
  for (const auto& p : pilots) {
    if (p.deltas.empty() || p.H < 1) throw std::invalid_argument("calibrate: malformed pilot");
    double sum_sq = 0.0;
    for (const double d : p.deltas) sum_sq += d * d;
    const double x1 = static_cast<double>(p.H) * sum_sq;
    const double x2 = 1.0 / (std::sqrt(static_cast<double>(p.deltas.size())) * p.H);
    s11 += x1 * x1;
    s12 += x1 * x2;
    s22 += x2 * x2;
    r1 += x1 * p.rounds;
    r2 += x2 * p.rounds;
  }
  const double det = s11 * s22 - s12 * s12;
  if (pilots.size() < 2 || std::abs(det) <= 1e-12 * s11 * s22) {
    throw std::invalid_argument("calibrate: pilots must differ in (delta, H)");
  }
  return {(r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det};
}

}  // namespace flexspar
