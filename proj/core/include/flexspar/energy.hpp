#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "flexspar/bound.hpp"
#include "flexspar/numerics.hpp"

namespace flexspar {

/// Channel with a known long-run rate in bits/s.
struct FixedRate {
  double bits_per_second = 0.0;
};

/// Rayleigh block fading: the power gain |h|^2 is exponential with this mean.
struct RayleighFading {
  double mean_gain = 1.0;
};

struct ChannelParams {
  double bandwidth_hz = 0.0;
  double tx_power_w = 0.0;
  double noise_power_w = 0.0;
  std::variant<FixedRate, RayleighFading> fading = FixedRate{};
};

/// GPU DVFS energy model: power P0 + alpha f_mem + beta v^2 f_core,
/// time T0 + a / f_mem + b / f_core.
struct GpuParams {
  double static_power_w = 0.0;
  double static_time_s = 0.0;
  double alpha_mem = 0.0;
  double beta_core = 0.0;
  double a_mem = 0.0;
  double b_core = 0.0;
  double core_voltage_v = 1.0;
  double core_freq_hz = 1.0;
  double mem_freq_hz = 1.0;
};

/// One device after its channel rate and per-iteration compute energy are resolved.
struct DeviceEnergy {
  double tx_power_w = 0.0;
  double rate_bps = 0.0;
  double compute_j_per_iter = 0.0;
};

/// Per-device sparsities and the synchronisation period.
struct CompressionPlan {
  std::vector<double> deltas;
  int H = 1;
};

enum class PayloadMode { exact, approx };

/// Which round-count model multiplies the per-round energy.
enum class RoundsModel {
  two_term,  // c_alpha H sum delta_m^2 + c_beta / (sqrt(M) H)
  full_k,    // closed-form K(delta_rms, H) including the square-root term
};

struct EnergyModel {
  std::size_t dim = 0;
  int fpp = 32;
  double s0 = 0.0;
  double s1 = 1.0;
  double c_alpha = 1.0;
  double c_beta = 1.0;
  double delta_lb = 4.4816890703380645;  // e^{3/2}
  double delta_ub = 1000.0;
  std::vector<int> h_candidates{1, 2, 4, 8, 16, 32};
  std::vector<DeviceEnergy> devices;
  std::optional<RoundsConstants> full_k;  // required for RoundsModel::full_k

  std::size_t num_devices() const { return devices.size(); }
  /// Throws std::invalid_argument if any invariant is broken.
  void validate() const;
  bool plan_feasible(const CompressionPlan& plan, double tol = 0.0) const;
};

/// Long-run rate: FixedRate returns its rate, Rayleigh averages
/// W log2(1 + P |h|^2 / N0) over n_samples seeded fading draws.
double avg_rate(const ChannelParams& ch, std::size_t n_samples, const SeedSpec& seed);

/// Monte-Carlo mean of W log2(1 + snr) with a caller-supplied SNR sampler.
double mean_rate(double bandwidth_hz, const std::function<double()>& snr_sample, std::size_t n_samples);

/// Joules to upload `payload_bits`: P S / R.
double comm_energy(const DeviceEnergy& dev, double payload_bits);

/// Joules for one local SGD iteration on the GPU.
double comp_energy_per_iter(const GpuParams& gpu);

DeviceEnergy resolve_device(const ChannelParams& ch, const GpuParams& gpu, std::size_t rate_samples,
                            const SeedSpec& seed);

/// Upload bits per round for one device at the given sparsity.
double round_payload_bits(double delta, const EnergyModel& em, PayloadMode mode);

/// Energy of all devices between two synchronisations.
double round_energy(const CompressionPlan& plan, const EnergyModel& em, PayloadMode mode);

/// Round-count factor multiplying round_energy in the total-energy objective.
double rounds_factor(const CompressionPlan& plan, const EnergyModel& em, RoundsModel rounds);

/// Modelled training energy: round_energy times the round-count factor.
double total_energy_objective(const CompressionPlan& plan, const EnergyModel& em, PayloadMode mode,
                              RoundsModel rounds = RoundsModel::two_term);

/// Pilot measurement for fitting c_alpha and c_beta.
struct PilotObservation {
  std::vector<double> deltas;
  int H = 1;
  double rounds = 0.0;
};

struct RoundConstantsFit {
  double c_alpha = 0.0;
  double c_beta = 0.0;
};

/// Least-squares fit of rounds = c_alpha H sum delta^2 + c_beta / (sqrt(M) H)
/// to two or more pilot runs. Throws std::invalid_argument on a singular design.
RoundConstantsFit calibrate_round_constants(std::span<const PilotObservation> pilots);

}  // namespace flexspar
