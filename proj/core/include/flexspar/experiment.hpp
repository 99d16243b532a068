#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexspar/bound.hpp"
#include "flexspar/control.hpp"
#include "flexspar/energy.hpp"
#include "flexspar/fedcore.hpp"
#include "flexspar/taskdata.hpp"

namespace flexspar {

/// One experiment. Serialised as a flat JSON object whose keys are the dotted
/// names in the comments; unknown keys are rejected on load.
struct ExperimentConfig {
  // task.*
  std::string task_kind = "logistic";
  std::size_t task_n = 2400;
  std::size_t task_dim = 20;
  double task_skew = 0.5;
  std::uint64_t task_seed = 1;
  double task_noise = 0.05;

  // population.*  Group g has bandwidth W + offset_g * L_het * het_unit_hz,
  // offsets {-0.03, -0.01, +0.01, +0.03} for four groups.
  std::vector<std::size_t> group_sizes{3, 3, 3, 3};
  double L_het = 10.0;
  double bandwidth_mean_hz = 1e9;
  double het_unit_hz = 1e9;

  // channel.*
  std::string fading = "rayleigh";  // or "fixed"
  double tx_power_w = 0.2;
  double noise_power_w = 0.02;
  double mean_gain = 1.0;
  double fixed_rate_bps = 1e9;  // "fixed" fading only
  std::size_t rate_samples = 100000;

  // gpu.*
  GpuParams gpu{1.0, 0.1, 0.0, 0.0, 0.0, 0.0, 1.0, 1e9, 1e9};

  // energy.*
  double s0 = 0.0;
  double s1 = 1.0;
  int fpp = 32;
  double c_alpha = 1.0;
  double c_beta = 1.0;
  double delta_lb = 4.4816890703380645;
  double delta_ub = 1000.0;
  std::vector<int> h_candidates{1, 2, 4, 8, 16, 32};

  // control.*
  std::string cut_rule = "bounded";
  std::size_t max_outer = 50;
  double gamma0 = 0.9;

  // train.*  Exactly one of eta and theta is set.
  std::size_t T = 2000;
  std::optional<double> eta = 0.5;
  std::optional<double> theta;
  std::size_t b0 = 8;
  double rho = 1.001;
  std::size_t batch_cap = 0;
  std::optional<double> target_loss;
  bool stop_at_target = false;
  std::size_t threads = 1;

  std::vector<std::string> schemes{"flexible", "syn_sgd_spars", "greedy_spars", "unified_spar"};
  std::string output_dir = "runs/default";

  std::size_t num_devices() const;
  /// Group index of every device, groups laid out contiguously.
  std::vector<std::size_t> device_groups() const;
  /// Throws std::invalid_argument with the offending key.
  void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json serialize_config(const ExperimentConfig& cfg);

/// Bandwidth of each group for the configured heterogeneity level.
std::vector<double> group_bandwidths(const ExperimentConfig& cfg);

/// Resolves every device (rates by seeded Monte Carlo) into an energy model.
EnergyModel build_energy_model(const ExperimentConfig& cfg);

BendersSettings control_settings(const ExperimentConfig& cfg);

/// Learning task built from the config: data, shards and model.
struct Task {
  LossModel model;
  Dataset data;
  Partition part;
};
Task build_task(const ExperimentConfig& cfg);

TrainConfig train_config(const ExperimentConfig& cfg, std::size_t H);

/// Pilot setting for round-constant calibration: one shared delta and a period.
struct PilotSetting {
  double delta = 0.0;
  int H = 1;
};

/// Trains each pilot to cfg.target_loss (all devices at the same delta) and
/// fits c_alpha, c_beta to the observed rounds. Pilots that miss the target
/// count as T / H rounds. Requires a target loss.
RoundConstantsFit calibrate_rounds(const ExperimentConfig& cfg, std::span<const PilotSetting> pilots);

/// Outcome of one scheme inside run_experiment.
struct SchemeRun {
  std::string scheme;
  PlanResult plan;
  bool diverged = false;
  std::string error;
  std::optional<std::size_t> iterations_to_target;
  std::optional<std::size_t> rounds_to_target;
  double energy_total_j = 0.0;  // to target when reached, otherwise whole run
  double energy_comm_j = 0.0;
  double energy_comp_j = 0.0;
  double final_loss = 0.0;
  std::optional<double> final_accuracy;
  std::vector<RoundTrace> trace;
};

struct ExperimentResult {
  std::filesystem::path dir;
  std::vector<SchemeRun> runs;
  nlohmann::json summary;
};

/// Plans and trains every scheme, writing <scheme>.trace.jsonl, <scheme>.csv
/// and summary.json into `out_dir` (cfg.output_dir when empty).
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::filesystem::path out_dir = {});

/// Energy-intensity axes of the sweep.
enum class IntensityAxis { zeta_com, zeta_cmp };
std::string to_string(IntensityAxis axis);
IntensityAxis intensity_axis_from_string(const std::string& name);

/// (1/M) sum P_m s1 / R_m in J/bit.
double zeta_com(const EnergyModel& em);
/// (1/M) sum E_m in J per iteration.
double zeta_cmp(const EnergyModel& em);
/// Copy of `em` with transmit powers (zeta_com) or compute energies (zeta_cmp)
/// scaled uniformly so the axis intensity equals `target`.
EnergyModel rescale_intensity(const EnergyModel& em, IntensityAxis axis, double target);

struct SweepRow {
  double value = 0.0;
  int H = 1;
  std::vector<double> group_delta;  // mean delta per group, NaN for an empty group
  double objective = 0.0;
};

struct SweepTable {
  IntensityAxis axis = IntensityAxis::zeta_com;
  std::vector<SweepRow> rows;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Flexible plan at each intensity value. Values must be positive and sorted.
SweepTable sweep_intensity(const ExperimentConfig& cfg, IntensityAxis axis, const std::vector<double>& values);

struct VerifyReport {
  bool ok = true;
  nlohmann::json details;
};

/// Re-runs a finished experiment from its summary.json with invariant checks,
/// compares the CSV traces byte for byte and evaluates the convergence bound
/// with constants estimated along the run.
VerifyReport verify_run(const std::filesystem::path& run_dir);

/// Convergence-bound check on one finished run with constants measured at the
/// server models recorded at synchronisations.
BoundReport bound_check(const Task& task, const ExperimentConfig& cfg, const RunResult& run,
                        const CompressionPlan& plan, const ParamVector& w0);

}  // namespace flexspar
