#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexspar/compression.hpp"
#include "flexspar/energy.hpp"
#include "flexspar/numerics.hpp"
#include "flexspar/taskdata.hpp"

namespace flexspar {

/// Raised when a loss or gradient turns non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t iteration, const std::string& what);
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

struct TrainConfig {
  std::size_t T = 1;
  std::size_t H = 1;
  double eta = 0.01;
  std::size_t b0 = 1;
  double rho = 1.0;
  std::size_t batch_cap = 0;  // 0 caps at the participant's shard size
  std::optional<double> target_loss;
  bool stop_at_target = false;

  /// Throws std::invalid_argument on T, H, b0 < 1, eta <= 0 or rho < 1.
  void validate() const;
};

/// Constant step size theta * sqrt(M / T).
double eta_from_theta(double theta, std::size_t M, std::size_t T);

/// Starting model: zeros for the linear models, seeded N(0, 0.1^2) weights
/// for mlp1 so the hidden units are not symmetric.
ParamVector initial_model(const LossModel& model, const SeedSpec& seed);

/// Mini-batch size at iteration t: min(floor(rho^t b0), cap).
std::size_t batch_size_at(const TrainConfig& cfg, std::size_t t, std::size_t cap);

/// One device inside the engine.
struct Participant {
  std::size_t id = 0;
  std::vector<std::size_t> shard;
  ParamVector w_hat;
  ParamVector err;
  SparsityLevel sparsity{1.0, 1};
  DeviceEnergy device;
};

/// Per-iteration record. Cumulative fields include everything up to and
/// including iteration t.
struct RoundTrace {
  std::size_t t = 0;
  std::size_t batch_size = 0;
  bool synced = false;
  double loss = 0.0;                // F at the server model after iteration t
  double grad_norm_sq_mean = 0.0;   // (1/M) sum_m ||grad f_m(w_hat_m^t)||^2, full shards
  double bits_total = 0.0;
  double energy_comm_j = 0.0;
  double energy_comp_j = 0.0;
  std::vector<double> bits_per_participant;
  std::vector<double> comm_j_per_participant;
  std::vector<double> comp_j_per_participant;

  double energy_total_j() const { return energy_comm_j + energy_comp_j; }
};

struct InvariantViolation {
  std::string invariant;  // "error_update", "virtual_sequence" or "bounded_memory"
  std::size_t t = 0;
  std::size_t participant = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct InvariantReport {
  std::size_t syncs_checked = 0;
  std::size_t steps_checked = 0;
  double max_error_update_residual = 0.0;
  double max_virtual_residual = 0.0;
  double max_memory_ratio = 0.0;  // max ||e_m||^2 / (4 delta^2 eta^2 G^2 H^2)
  std::vector<InvariantViolation> violations;

  bool ok() const { return violations.empty(); }
};

struct RunOptions {
  bool check_invariants = false;
  bool record_grad_norms = true;
  bool record_server_history = false;
  std::size_t max_snapshots = 0;  // server models kept at syncs for constants probing
  std::size_t threads = 1;
  double error_update_tol = 1e-12;
  double virtual_tol = 1e-9;
};

struct RunResult {
  ParamVector w;
  std::vector<RoundTrace> trace;
  InvariantReport invariants;
  std::vector<ParamVector> server_history;  // w^(t+1) per iteration when recorded
  std::vector<ParamVector> snapshots;
  double max_batch_grad_norm = 0.0;
  std::optional<std::size_t> target_reached_at;
  std::vector<std::string> warnings;
};

/// Training engine for compressed local SGD with error feedback and growing
/// mini-batches. Participants step locally every iteration; every H-th
/// iteration each uploads Top_k(e + w - w_hat), keeps the residual and the
/// server averages the uploads in ascending participant order.
class Engine {
 public:
  Engine(LossModel model, const Dataset& data, const Partition& part, std::span<const double> deltas,
         const EnergyModel& energy, TrainConfig cfg, SeedSpec seed, RunOptions options = {});

  RunResult run();
  RunResult run(const ParamVector& w0);

 private:
  LossModel model_;
  const Dataset& data_;
  const Partition& part_;
  std::vector<double> deltas_;
  EnergyModel energy_;
  TrainConfig cfg_;
  SeedSpec seed_;
  RunOptions opt_;
};

RunResult run_ftlsgd_db(const LossModel& model, const Dataset& data, const Partition& part,
                        std::span<const double> deltas, const EnergyModel& energy,
                        const TrainConfig& cfg, const SeedSpec& seed, const RunOptions& options = {});

/// Plain synchronous distributed SGD used as a reference: each worker takes
/// one step from the server model and the server averages the model deltas.
/// Returns the server model after every iteration.
std::vector<ParamVector> reference_sync_sgd(const LossModel& model, const Dataset& data,
                                            const Partition& part, const TrainConfig& cfg,
                                            const SeedSpec& seed, const ParamVector& w0);

/// Checks the exact error-feedback identity e_new + g = e + w - w_half
/// component-wise. Returns the largest relative residual.
double error_update_residual(std::span<const double> e_old, std::span<const double> w,
                             std::span<const double> w_half, std::span<const double> e_new,
                             std::span<const double> g);

/// ||mean_m w_hat_m - w_virtual - mean_m e_m||_inf.
double virtual_sequence_residual(std::span<const Participant> participants,
                                 std::span<const double> w_virtual);

/// 4 delta^2 eta^2 G^2 H^2.
double memory_bound(double delta, double eta, double G, double H);

void write_trace_csv(std::ostream& out, std::span<const RoundTrace> trace);
void write_trace_jsonl(std::ostream& out, std::span<const RoundTrace> trace);

}  // namespace flexspar
