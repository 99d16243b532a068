#include "flexspar/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace flexspar {
namespace {

using nlohmann::json;

struct Field {
  std::string key;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
};

template <typename T>
Field field(std::string key, T ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return json(c.*member); },
          [member](ExperimentConfig& c, const json& v) { c.*member = v.get<T>(); }};
}

template <typename T>
Field optional_field(std::string key, std::optional<T> ExperimentConfig::*member) {
  return {key,
          [member](const ExperimentConfig& c) { return (c.*member) ? json(*(c.*member)) : json(nullptr); },
          [member](ExperimentConfig& c, const json& v) {
            if (v.is_null()) {
              (c.*member).reset();
            } else {
              c.*member = v.get<T>();
            }
          }};
}

Field gpu_field(std::string key, double GpuParams::*member) {
  return {key, [member](const ExperimentConfig& c) { return json(c.gpu.*member); },
          [member](ExperimentConfig& c, const json& v) { c.gpu.*member = v.get<double>(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("task.kind", &ExperimentConfig::task_kind),
      field("task.n", &ExperimentConfig::task_n),
      field("task.dim", &ExperimentConfig::task_dim),
      field("task.skew", &ExperimentConfig::task_skew),
      field("task.seed", &ExperimentConfig::task_seed),
      field("task.noise", &ExperimentConfig::task_noise),
      field("population.group_sizes", &ExperimentConfig::group_sizes),
      field("population.L_het", &ExperimentConfig::L_het),
      field("population.bandwidth_mean_hz", &ExperimentConfig::bandwidth_mean_hz),
      field("population.het_unit_hz", &ExperimentConfig::het_unit_hz),
      field("channel.fading", &ExperimentConfig::fading),
      field("channel.tx_power_w", &ExperimentConfig::tx_power_w),
      field("channel.noise_power_w", &ExperimentConfig::noise_power_w),
      field("channel.mean_gain", &ExperimentConfig::mean_gain),
      field("channel.fixed_rate_bps", &ExperimentConfig::fixed_rate_bps),
      field("channel.rate_samples", &ExperimentConfig::rate_samples),
      gpu_field("gpu.static_power_w", &GpuParams::static_power_w),
      gpu_field("gpu.static_time_s", &GpuParams::static_time_s),
      gpu_field("gpu.alpha_mem", &GpuParams::alpha_mem),
      gpu_field("gpu.beta_core", &GpuParams::beta_core),
      gpu_field("gpu.a_mem", &GpuParams::a_mem),
      gpu_field("gpu.b_core", &GpuParams::b_core),
      gpu_field("gpu.core_voltage_v", &GpuParams::core_voltage_v),
      gpu_field("gpu.core_freq_hz", &GpuParams::core_freq_hz),
      gpu_field("gpu.mem_freq_hz", &GpuParams::mem_freq_hz),
      field("energy.s0", &ExperimentConfig::s0),
      field("energy.s1", &ExperimentConfig::s1),
      field("energy.fpp", &ExperimentConfig::fpp),
      field("energy.c_alpha", &ExperimentConfig::c_alpha),
      field("energy.c_beta", &ExperimentConfig::c_beta),
      field("energy.delta_lb", &ExperimentConfig::delta_lb),
      field("energy.delta_ub", &ExperimentConfig::delta_ub),
      field("energy.h_candidates", &ExperimentConfig::h_candidates),
      field("control.cut_rule", &ExperimentConfig::cut_rule),
      field("control.max_outer", &ExperimentConfig::max_outer),
      field("control.gamma0", &ExperimentConfig::gamma0),
      field("train.T", &ExperimentConfig::T),
      optional_field("train.eta", &ExperimentConfig::eta),
      optional_field("train.theta", &ExperimentConfig::theta),
      field("train.b0", &ExperimentConfig::b0),
      field("train.rho", &ExperimentConfig::rho),
      field("train.batch_cap", &ExperimentConfig::batch_cap),
      optional_field("train.target_loss", &ExperimentConfig::target_loss),
      field("train.stop_at_target", &ExperimentConfig::stop_at_target),
      field("train.threads", &ExperimentConfig::threads),
      field("schemes", &ExperimentConfig::schemes),
      field("output_dir", &ExperimentConfig::output_dir),
  };
  return table;
}

void require(bool cond, const std::string& key, const std::string& what) {
  if (!cond) throw std::invalid_argument("config key '" + key + "': " + what);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

double eta_of(const ExperimentConfig& cfg) {
  if (cfg.eta) return *cfg.eta;
  return eta_from_theta(*cfg.theta, cfg.num_devices(), cfg.T);
}

std::vector<double> effective_deltas(const CompressionPlan& plan, std::size_t dim) {
  std::vector<double> out;
  for (const double d : plan.deltas) out.push_back(SparsityLevel(d, dim).effective_delta());
  return out;
}

RunOptions run_options(const ExperimentConfig& cfg, bool check) {
  RunOptions opt;
  opt.threads = cfg.threads;
  opt.check_invariants = check;
  opt.max_snapshots = check ? 20 : 0;
  return opt;
}

std::string trace_csv(const std::vector<RoundTrace>& trace) {
  std::ostringstream ss;
  write_trace_csv(ss, trace);
  return ss.str();
}

}  // namespace

std::size_t ExperimentConfig::num_devices() const {
  return std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0});
}

std::vector<std::size_t> ExperimentConfig::device_groups() const {
  std::vector<std::size_t> out;
  for (std::size_t g = 0; g < group_sizes.size(); ++g) out.insert(out.end(), group_sizes[g], g);
  return out;
}

void ExperimentConfig::validate() const {
  loss_kind_from_string(task_kind);
  require(task_dim >= 1, "task.dim", "must be >= 1");
  require(task_skew >= 0.0 && task_skew <= 1.0, "task.skew", "must lie in [0, 1]");
  require(task_noise >= 0.0, "task.noise", "must be >= 0");
  require(group_sizes.size() == 4, "population.group_sizes", "exactly four groups are required");
  require(num_devices() >= 1, "population.group_sizes", "needs at least one device");
  require(L_het >= 0.0, "population.L_het", "must be >= 0");
  require(bandwidth_mean_hz > 0.0, "population.bandwidth_mean_hz", "must be > 0");
  require(het_unit_hz >= 0.0, "population.het_unit_hz", "must be >= 0");
  for (const double w : group_bandwidths(*this)) {
    require(w > 0.0, "population.L_het", "makes a group bandwidth non-positive");
  }
  require(fading == "rayleigh" || fading == "fixed", "channel.fading", "must be 'rayleigh' or 'fixed'");
  require(tx_power_w > 0.0, "channel.tx_power_w", "must be > 0");
  require(noise_power_w > 0.0, "channel.noise_power_w", "must be > 0");
  require(mean_gain > 0.0, "channel.mean_gain", "must be > 0");
  require(fixed_rate_bps > 0.0, "channel.fixed_rate_bps", "must be > 0");
  require(rate_samples >= 1, "channel.rate_samples", "must be >= 1");
  require(gpu.core_freq_hz > 0.0 && gpu.mem_freq_hz > 0.0, "gpu.core_freq_hz", "frequencies must be > 0");
  require(comp_energy_per_iter(gpu) > 0.0, "gpu.static_power_w", "compute energy per iteration must be > 0");
  require(T >= 1, "train.T", "must be >= 1");
  require(eta.has_value() != theta.has_value(), "train.eta", "set exactly one of train.eta and train.theta");
  require(!eta || *eta > 0.0, "train.eta", "must be > 0");
  require(!theta || *theta > 0.0, "train.theta", "must be > 0");
  require(b0 >= 1, "train.b0", "must be >= 1");
  require(rho >= 1.0, "train.rho", "must be >= 1");
  require(threads >= 1, "train.threads", "must be >= 1");
  require(task_n >= num_devices() * b0, "task.n", "must be at least devices * train.b0");
  require(max_outer >= 1, "control.max_outer", "must be >= 1");
  require(gamma0 > 0.0 && gamma0 <= 1.0, "control.gamma0", "must lie in (0, 1]");
  cut_rule_from_string(cut_rule);
  require(!schemes.empty(), "schemes", "must list at least one scheme");
  for (const auto& s : schemes) scheme_from_string(s);
  EnergyModel em;
  em.dim = task_dim;
  em.fpp = fpp;
  em.s0 = s0;
  em.s1 = s1;
  em.c_alpha = c_alpha;
  em.c_beta = c_beta;
  em.delta_lb = delta_lb;
  em.delta_ub = delta_ub;
  em.h_candidates = h_candidates;
  em.devices.push_back({1.0, 1.0, 1.0});
  em.validate();
}

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    try {
      it->set(cfg, value);
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  // an explicit theta replaces the default step size
  if (j.contains("train.theta") && !j["train.theta"].is_null() && !j.contains("train.eta")) cfg.eta.reset();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json serialize_config(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& f : fields()) j[f.key] = f.get(cfg);
  return j;
}

std::vector<double> group_bandwidths(const ExperimentConfig& cfg) {
  static constexpr double kOffsets[4] = {-0.03, -0.01, 0.01, 0.03};
  std::vector<double> out;
  for (std::size_t g = 0; g < cfg.group_sizes.size() && g < 4; ++g) {
    out.push_back(cfg.bandwidth_mean_hz + kOffsets[g] * cfg.L_het * cfg.het_unit_hz);
  }
  return out;
}

EnergyModel build_energy_model(const ExperimentConfig& cfg) {
  EnergyModel em;
  em.dim = LossModel{loss_kind_from_string(cfg.task_kind), cfg.task_dim}.param_dim();
  em.fpp = cfg.fpp;
  em.s0 = cfg.s0;
  em.s1 = cfg.s1;
  em.c_alpha = cfg.c_alpha;
  em.c_beta = cfg.c_beta;
  em.delta_lb = cfg.delta_lb;
  em.delta_ub = cfg.delta_ub;
  em.h_candidates = cfg.h_candidates;
  const auto bw = group_bandwidths(cfg);
  const auto groups = cfg.device_groups();
  const SeedSpec root{cfg.task_seed};
  for (std::size_t m = 0; m < groups.size(); ++m) {
    ChannelParams ch;
    ch.bandwidth_hz = bw[groups[m]];
    ch.tx_power_w = cfg.tx_power_w;
    ch.noise_power_w = cfg.noise_power_w;
    if (cfg.fading == "fixed") {
      // a fixed link keeps the configured spectral efficiency per Hz of the mean band
      ch.fading = FixedRate{cfg.fixed_rate_bps * ch.bandwidth_hz / cfg.bandwidth_mean_hz};
    } else {
      ch.fading = RayleighFading{cfg.mean_gain};
    }
    const SeedSpec dev_seed{root.derive("fading:" + std::to_string(m))};
    em.devices.push_back(resolve_device(ch, cfg.gpu, cfg.rate_samples, dev_seed));
  }
  em.validate();
  return em;
}

BendersSettings control_settings(const ExperimentConfig& cfg) {
  BendersSettings s;
  s.cut_rule = cut_rule_from_string(cfg.cut_rule);
  s.max_outer = cfg.max_outer;
  s.ica.gamma0 = cfg.gamma0;
  return s;
}

Task build_task(const ExperimentConfig& cfg) {
  Task task;
  task.model = LossModel{loss_kind_from_string(cfg.task_kind), cfg.task_dim};
  const SeedSpec seed{cfg.task_seed};
  task.data = make_synthetic(task.model, cfg.task_n, seed, SyntheticOptions{cfg.task_noise});
  task.part = partition(task.data, cfg.num_devices(), cfg.task_skew, seed);
  return task;
}

TrainConfig train_config(const ExperimentConfig& cfg, std::size_t H) {
  TrainConfig tc;
  tc.T = cfg.T;
  tc.H = H;
  tc.eta = eta_of(cfg);
  tc.b0 = cfg.b0;
  tc.rho = cfg.rho;
  tc.batch_cap = cfg.batch_cap;
  tc.target_loss = cfg.target_loss;
  tc.stop_at_target = cfg.stop_at_target;
  return tc;
}

RoundConstantsFit calibrate_rounds(const ExperimentConfig& cfg, std::span<const PilotSetting> pilots) {
  cfg.validate();
  if (!cfg.target_loss) throw std::invalid_argument("calibrate_rounds: train.target_loss is required");
  ExperimentConfig pilot_cfg = cfg;
  pilot_cfg.stop_at_target = true;
  const Task task = build_task(pilot_cfg);
  const EnergyModel em = build_energy_model(pilot_cfg);
  std::vector<PilotObservation> obs;
  for (const auto& p : pilots) {
    const std::vector<double> deltas(cfg.num_devices(), p.delta);
    RunOptions opts = run_options(pilot_cfg, false);
    opts.record_grad_norms = false;
    const auto rr = run_ftlsgd_db(task.model, task.data, task.part, deltas, em,
                                  train_config(pilot_cfg, static_cast<std::size_t>(p.H)), SeedSpec{cfg.task_seed}, opts);
    const double iters = rr.target_reached_at ? static_cast<double>(*rr.target_reached_at + 1)
                                              : static_cast<double>(cfg.T);
    obs.push_back({deltas, p.H, iters / p.H});
  }
  return calibrate_round_constants(obs);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::filesystem::path out_dir) {
  cfg.validate();
  ExperimentResult result;
  result.dir = out_dir.empty() ? std::filesystem::path(cfg.output_dir) : out_dir;
  std::filesystem::create_directories(result.dir);

  const Task task = build_task(cfg);
  const EnergyModel em = build_energy_model(cfg);
  const auto settings = control_settings(cfg);
  const SeedSpec seed{cfg.task_seed};

  json summary;
  summary["config"] = serialize_config(cfg);
  summary["devices"] = json::array();
  for (const auto& dev : em.devices) {
    summary["devices"].push_back(
        {{"tx_power_w", dev.tx_power_w}, {"rate_bps", dev.rate_bps}, {"compute_j_per_iter", dev.compute_j_per_iter}});
  }
  summary["schemes"] = json::array();

  for (const auto& name : cfg.schemes) {
    SchemeRun run;
    run.scheme = name;
    run.plan = solve_scheme(scheme_from_string(name), em, settings);
    json entry;
    entry["scheme"] = name;
    entry["plan"] = run.plan.to_json();
    entry["plan_events"] = run.plan.events;
    try {
      auto rr = run_ftlsgd_db(task.model, task.data, task.part, run.plan.plan.deltas, em,
                              train_config(cfg, static_cast<std::size_t>(run.plan.plan.H)), seed,
                              run_options(cfg, false));
      run.trace = std::move(rr.trace);
      const RoundTrace& last = run.trace.back();
      const RoundTrace* at = &last;
      if (rr.target_reached_at) {
        run.iterations_to_target = *rr.target_reached_at + 1;
        at = &run.trace[*rr.target_reached_at];
        run.rounds_to_target = (*rr.target_reached_at + 1) / static_cast<std::size_t>(run.plan.plan.H);
      }
      run.energy_total_j = at->energy_total_j();
      run.energy_comm_j = at->energy_comm_j;
      run.energy_comp_j = at->energy_comp_j;
      run.final_loss = last.loss;
      if (task.model.is_classifier()) run.final_accuracy = accuracy(task.model, rr.w, task.data);
    } catch (const DivergenceError& e) {
      run.diverged = true;
      run.error = e.what();
    }
    {
      std::ofstream jsonl(result.dir / (name + ".trace.jsonl"), std::ios::binary);
      write_trace_jsonl(jsonl, run.trace);
    }
    write_file(result.dir / (name + ".csv"), trace_csv(run.trace));

    entry["diverged"] = run.diverged;
    entry["error"] = run.error.empty() ? json(nullptr) : json(run.error);
    entry["iterations_to_target"] = run.iterations_to_target ? json(*run.iterations_to_target) : json(nullptr);
    entry["rounds_to_target"] = run.rounds_to_target ? json(*run.rounds_to_target) : json(nullptr);
    entry["energy_total_J"] = run.energy_total_j;
    entry["energy_comm_J"] = run.energy_comm_j;
    entry["energy_comp_J"] = run.energy_comp_j;
    entry["final_loss"] = run.final_loss;
    entry["final_accuracy"] = run.final_accuracy ? json(*run.final_accuracy) : json(nullptr);
    summary["schemes"].push_back(entry);
    result.runs.push_back(std::move(run));
  }
  write_file(result.dir / "summary.json", summary.dump(2) + "\n");
  result.summary = std::move(summary);
  return result;
}

std::string to_string(IntensityAxis axis) { return axis == IntensityAxis::zeta_com ? "zeta_com" : "zeta_cmp"; }

IntensityAxis intensity_axis_from_string(const std::string& name) {
  if (name == "zeta_com" || name == "ζ_com" || name == "com") return IntensityAxis::zeta_com;
  if (name == "zeta_cmp" || name == "ζ_cmp" || name == "cmp") return IntensityAxis::zeta_cmp;
  throw std::invalid_argument("unknown sweep axis '" + name + "' (expected zeta_com or zeta_cmp)");
}

double zeta_com(const EnergyModel& em) {
  double acc = 0.0;
  for (const auto& dev : em.devices) acc += dev.tx_power_w * em.s1 / dev.rate_bps;
  return acc / static_cast<double>(em.devices.size());
}

double zeta_cmp(const EnergyModel& em) {
  double acc = 0.0;
  for (const auto& dev : em.devices) acc += dev.compute_j_per_iter;
  return acc / static_cast<double>(em.devices.size());
}

EnergyModel rescale_intensity(const EnergyModel& em, IntensityAxis axis, double target) {
  if (!(target > 0.0)) throw std::invalid_argument("rescale_intensity: target must be > 0");
  EnergyModel out = em;
  const double current = axis == IntensityAxis::zeta_com ? zeta_com(em) : zeta_cmp(em);
  if (!(current > 0.0)) throw std::invalid_argument("rescale_intensity: current intensity is zero");
  const double f = target / current;
  for (auto& dev : out.devices) {
    if (axis == IntensityAxis::zeta_com) {
      dev.tx_power_w *= f;
    } else {
      dev.compute_j_per_iter *= f;
    }
  }
  return out;
}

json SweepTable::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"value", r.value}, {"H", r.H}, {"group_delta", r.group_delta}, {"objective", r.objective}});
  }
  return {{"axis", flexspar::to_string(axis)}, {"rows", rows_j}};
}

std::string SweepTable::to_csv() const {
  std::ostringstream ss;
  const std::size_t groups = rows.empty() ? 0 : rows.front().group_delta.size();
  ss << flexspar::to_string(axis) << ",H";
  for (std::size_t g = 0; g < groups; ++g) ss << ",delta_g" << (g + 1);
  ss << ",objective\r\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    ss << buf << ',' << r.H;
    for (const double d : r.group_delta) {
      ss << ',';
      if (std::isnan(d)) continue;  // empty group
      std::snprintf(buf, sizeof buf, "%.17g", d);
      ss << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", r.objective);
    ss << ',' << buf << "\r\n";
  }
  return ss.str();
}

SweepTable sweep_intensity(const ExperimentConfig& cfg, IntensityAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) throw std::invalid_argument("sweep: values must be positive");
    if (i > 0 && values[i] < values[i - 1]) throw std::invalid_argument("sweep: values must be sorted");
  }
  const EnergyModel base = build_energy_model(cfg);
  const auto settings = control_settings(cfg);
  const auto groups = cfg.device_groups();
  SweepTable table;
  table.axis = axis;
  for (const double v : values) {
    const auto plan = solve_flexible(rescale_intensity(base, axis, v), settings);
    SweepRow row;
    row.value = v;
    row.H = plan.plan.H;
    row.objective = plan.objective;
    row.group_delta.assign(cfg.group_sizes.size(), 0.0);
    for (std::size_t m = 0; m < groups.size(); ++m) row.group_delta[groups[m]] += plan.plan.deltas[m];
    for (std::size_t g = 0; g < row.group_delta.size(); ++g) {
      row.group_delta[g] = cfg.group_sizes[g] == 0 ? std::numeric_limits<double>::quiet_NaN()
                                                   : row.group_delta[g] / static_cast<double>(cfg.group_sizes[g]);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

BoundReport bound_check(const Task& task, const ExperimentConfig& cfg, const RunResult& run,
                        const CompressionPlan& plan, const ParamVector& w0) {
  ConstantsProbe probe;
  probe.points = run.snapshots;
  probe.points.insert(probe.points.begin(), w0);
  const auto k = estimate_constants(task.model, task.data, task.part, probe, SeedSpec{cfg.task_seed});
  const std::size_t M = cfg.num_devices();
  const double T = static_cast<double>(run.trace.size());
  const double eta = eta_of(cfg);
  BoundInputs in;
  in.M = static_cast<double>(M);
  in.T = T;
  in.theta = eta * std::sqrt(T) / std::sqrt(in.M);
  in.L = k.L;
  in.sigma = k.sigma;
  in.G = k.G;
  in.H = plan.H;
  in.rho = cfg.rho;
  in.b0 = static_cast<double>(cfg.b0);
  in.f0_gap = std::max(0.0, global_loss(task.model, w0, task.data, task.part) -
                                optimal_loss_lower_bound(task.model, task.data, task.part));
  in.deltas = effective_deltas(plan, task.model.param_dim());
  return verify_bound_on_run(run.trace, in);
}

VerifyReport verify_run(const std::filesystem::path& run_dir) {
  const json summary = json::parse(read_file(run_dir / "summary.json"));
  const ExperimentConfig cfg = parse_config(summary.at("config"));
  const Task task = build_task(cfg);
  const EnergyModel em = build_energy_model(cfg);
  const SeedSpec seed{cfg.task_seed};
  const ParamVector w0 = initial_model(task.model, seed);

  VerifyReport report;
  report.details["run_dir"] = run_dir.string();
  report.details["schemes"] = json::array();
  for (const auto& entry : summary.at("schemes")) {
    const std::string name = entry.at("scheme");
    json out;
    out["scheme"] = name;
    CompressionPlan plan{entry.at("plan").at("deltas").get<std::vector<double>>(), entry.at("plan").at("H").get<int>()};
    const auto replanned = solve_scheme(scheme_from_string(name), em, control_settings(cfg));
    out["plan_reproduced"] = replanned.plan.deltas == plan.deltas && replanned.plan.H == plan.H;
    bool ok = out["plan_reproduced"].get<bool>();
    try {
      const auto rr = run_ftlsgd_db(task.model, task.data, task.part, plan.deltas, em,
                                    train_config(cfg, static_cast<std::size_t>(plan.H)), seed, run_options(cfg, true));
      const bool csv_match = trace_csv(rr.trace) == read_file(run_dir / (name + ".csv"));
      out["csv_identical"] = csv_match;
      ok = ok && csv_match;
      json inv;
      inv["syncs_checked"] = rr.invariants.syncs_checked;
      inv["steps_checked"] = rr.invariants.steps_checked;
      inv["max_error_update_residual"] = rr.invariants.max_error_update_residual;
      inv["max_virtual_residual"] = rr.invariants.max_virtual_residual;
      inv["max_memory_ratio"] = rr.invariants.max_memory_ratio;
      inv["violations"] = json::array();
      for (const auto& v : rr.invariants.violations) {
        inv["violations"].push_back(
            {{"invariant", v.invariant}, {"t", v.t}, {"participant", v.participant}, {"lhs", v.lhs}, {"rhs", v.rhs}});
      }
      out["invariants"] = inv;
      ok = ok && rr.invariants.ok();
      bool monotone = true;
      for (std::size_t i = 1; i < rr.trace.size(); ++i) {
        const auto& a = rr.trace[i - 1];
        const auto& b = rr.trace[i];
        monotone = monotone && b.bits_total >= a.bits_total && b.energy_comm_j >= a.energy_comm_j &&
                   b.energy_comp_j >= a.energy_comp_j;
      }
      out["cumulative_monotone"] = monotone;
      ok = ok && monotone;
      const auto bound = bound_check(task, cfg, rr, plan, w0);
      out["bound"] = bound.to_json();
      if (bound.evaluated) ok = ok && bound.holds;
    } catch (const DivergenceError& e) {
      out["diverged"] = e.what();
      ok = ok && entry.at("diverged").get<bool>();
    }
    out["ok"] = ok;
    report.ok = report.ok && ok;
    report.details["schemes"].push_back(out);
  }
  report.details["ok"] = report.ok;
  return report;
}

}  // namespace flexspar
