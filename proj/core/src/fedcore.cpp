#include "flexspar/fedcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

namespace flexspar {
namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Runs fn(m) for m in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker, so per-index state needs no locking.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t m = 0; m < n; ++m) fn(m);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t m = w; m < n; m += workers) fn(m);
    });
  }
}

std::string minibatch_label(std::size_t m) { return "minibatch:" + std::to_string(m); }

std::size_t participant_cap(const TrainConfig& cfg, std::size_t shard_size) {
  return cfg.batch_cap == 0 ? shard_size : std::min(cfg.batch_cap, shard_size);
}

}  // namespace

DivergenceError::DivergenceError(std::size_t iteration, const std::string& what)
    : std::runtime_error("diverged at iteration " + std::to_string(iteration) + ": " + what),
      iteration_(iteration) {}

void TrainConfig::validate() const {
  if (T < 1 || H < 1 || b0 < 1) throw std::invalid_argument("train config: T, H and b0 must be >= 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("train config: eta must be > 0");
  if (!(rho >= 1.0) || !std::isfinite(rho)) throw std::invalid_argument("train config: rho must be >= 1");
}

double eta_from_theta(double theta, std::size_t M, std::size_t T) {
  if (!(theta > 0.0) || M == 0 || T == 0) throw std::invalid_argument("eta_from_theta: bad arguments");
  return theta * std::sqrt(static_cast<double>(M)) / std::sqrt(static_cast<double>(T));
}

ParamVector initial_model(const LossModel& model, const SeedSpec& seed) {
  ParamVector w(model.param_dim(), 0.0);
  if (model.kind == LossKind::mlp1) {
    auto rng = seed.stream("init");
    for (double& x : w) x = 0.1 * rng.normal();
  }
  return w;
}

std::size_t batch_size_at(const TrainConfig& cfg, std::size_t t, std::size_t cap) {
  const double grown = std::floor(std::pow(cfg.rho, static_cast<double>(t)) * static_cast<double>(cfg.b0));
  if (!(grown < static_cast<double>(cap))) return cap;
  return std::max<std::size_t>(1, static_cast<std::size_t>(grown));
}

double error_update_residual(std::span<const double> e_old, std::span<const double> w,
                             std::span<const double> w_half, std::span<const double> e_new,
                             std::span<const double> g) {
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double rhs = e_old[i] + w[i] - w_half[i];
    const double lhs = e_new[i] + g[i];
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
  }
  return worst;
}

double virtual_sequence_residual(std::span<const Participant> participants,
                                 std::span<const double> w_virtual) {
  const double inv_m = 1.0 / static_cast<double>(participants.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < w_virtual.size(); ++i) {
    double mean_w = 0.0, mean_e = 0.0;
    for (const auto& p : participants) {
      mean_w += p.w_hat[i];
      mean_e += p.err[i];
    }
    const double r = mean_w * inv_m - w_virtual[i] - mean_e * inv_m;
    worst = std::max(worst, std::abs(r) / std::max(1.0, std::abs(w_virtual[i])));
  }
  return worst;
}

double memory_bound(double delta, double eta, double G, double H) {
  return 4.0 * delta * delta * eta * eta * G * G * H * H;
}

Engine::Engine(LossModel model, const Dataset& data, const Partition& part, std::span<const double> deltas,
               const EnergyModel& energy, TrainConfig cfg, SeedSpec seed, RunOptions options)
    : model_(model),
      data_(data),
      part_(part),
      deltas_(deltas.begin(), deltas.end()),
      energy_(energy),
      cfg_(cfg),
      seed_(seed),
      opt_(options) {
  cfg_.validate();
  const std::size_t M = part_.num_shards();
  if (M == 0) throw std::invalid_argument("engine: no participants");
  if (deltas_.size() != M) throw std::invalid_argument("engine: one sparsity per participant required");
  if (energy_.devices.size() != M) throw std::invalid_argument("engine: one device per participant required");
  for (const auto& shard : part_.shards) {
    if (shard.empty()) throw std::invalid_argument("engine: empty shard");
  }
}

RunResult Engine::run() { return run(initial_model(model_, seed_)); }

RunResult Engine::run(const ParamVector& w0) {
  const std::size_t M = part_.num_shards();
  const std::size_t d = model_.param_dim();
  if (w0.size() != d) throw std::invalid_argument("engine: initial model has the wrong dimension");
  const double eta = cfg_.eta;
  const double inv_m = 1.0 / static_cast<double>(M);

  std::vector<Participant> ps(M);
  std::vector<RandomStream> rngs;
  rngs.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    ps[m].id = m;
    ps[m].shard = part_.shards[m];
    ps[m].w_hat = w0;
    ps[m].err.assign(d, 0.0);
    ps[m].sparsity = SparsityLevel(deltas_[m], d);
    ps[m].device = energy_.devices[m];
    rngs.push_back(seed_.stream(minibatch_label(m)));
  }

  RunResult res;
  ParamVector w = w0;
  ParamVector w_virtual = w0;
  std::vector<ParamVector> grads(M, ParamVector(d, 0.0));
  std::vector<ParamVector> w_half(M);
  std::vector<double> grad_sq_full(M, 0.0);
  std::vector<double> batch_grad_norm(M, 0.0);
  std::vector<std::string> failures(M);
  std::vector<double> bits(M, 0.0), comm_j(M, 0.0), comp_j(M, 0.0);
  std::vector<double> payload_bits(M), upload_j(M);
  for (std::size_t m = 0; m < M; ++m) {
    payload_bits[m] = payload_exact(ps[m].sparsity, energy_.fpp, energy_.s0, energy_.s1).bits_total;
    upload_j[m] = comm_energy(ps[m].device, payload_bits[m]);
  }

  std::size_t min_shard = ps[0].shard.size();
  for (const auto& p : ps) min_shard = std::min(min_shard, p.shard.size());
  const std::size_t n_syncs = cfg_.T / cfg_.H;
  const std::size_t snapshot_stride =
      opt_.max_snapshots == 0 ? 0 : std::max<std::size_t>(1, (n_syncs + opt_.max_snapshots - 1) / opt_.max_snapshots);
  std::size_t sync_index = 0;
  double loss = global_loss(model_, w, data_, part_);
  double g_hat = 0.0;

  for (std::size_t t = 0; t < cfg_.T; ++t) {
    parallel_for(M, opt_.threads, [&](std::size_t m) {
      Participant& p = ps[m];
      if (opt_.record_grad_norms) {
        const auto full = loss_and_grad(model_, p.w_hat, p.shard, data_);
        grad_sq_full[m] = squared_norm(full.grad);
      }
      const std::size_t b = batch_size_at(cfg_, t, participant_cap(cfg_, p.shard.size()));
      const auto batch = sample_without_replacement(p.shard, b, rngs[m]);
      auto lg = loss_and_grad(model_, p.w_hat, batch, data_);
      if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
        failures[m] = "participant " + std::to_string(m) + " produced a non-finite loss or gradient";
        return;
      }
      grads[m] = std::move(lg.grad);
      batch_grad_norm[m] = std::sqrt(squared_norm(grads[m]));
      w_half[m].resize(d);
      for (std::size_t i = 0; i < d; ++i) w_half[m][i] = p.w_hat[i] - eta * grads[m][i];
    });
    for (std::size_t m = 0; m < M; ++m) {
      if (!failures[m].empty()) throw DivergenceError(t, failures[m]);
      g_hat = std::max(g_hat, batch_grad_norm[m]);
      comp_j[m] += ps[m].device.compute_j_per_iter;
    }

    if (opt_.check_invariants) {
      for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t m = 0; m < M; ++m) acc += grads[m][i];
        w_virtual[i] -= eta * (acc * inv_m);
      }
    }

    const bool sync = (t + 1) % cfg_.H == 0;
    if (sync) {
      ParamVector sum(d, 0.0);
      for (std::size_t m = 0; m < M; ++m) {
        Participant& p = ps[m];
        ParamVector u(d);
        for (std::size_t i = 0; i < d; ++i) u[i] = (p.err[i] + w[i]) - w_half[m][i];
        const ParamVector g = top_k(u, p.sparsity.k());
        ParamVector e_new(d);
        for (std::size_t i = 0; i < d; ++i) e_new[i] = u[i] - g[i];
        if (opt_.check_invariants) {
          const double r = error_update_residual(p.err, w, w_half[m], e_new, g);
          res.invariants.max_error_update_residual = std::max(res.invariants.max_error_update_residual, r);
          if (r > opt_.error_update_tol) res.invariants.violations.push_back({"error_update", t, m, r, opt_.error_update_tol});
        }
        p.err = std::move(e_new);
        for (std::size_t i = 0; i < d; ++i) sum[i] += g[i];
        bits[m] += payload_bits[m];
        comm_j[m] += upload_j[m];
      }
      for (std::size_t i = 0; i < d; ++i) w[i] -= sum[i] / static_cast<double>(M);
      if (!all_finite(w)) throw DivergenceError(t, "server model is non-finite");
      for (auto& p : ps) p.w_hat = w;
      loss = global_loss(model_, w, data_, part_);
      if (opt_.check_invariants) {
        ++res.invariants.syncs_checked;
        for (std::size_t m = 0; m < M; ++m) {
          const double lhs = squared_norm(ps[m].err);
          const double rhs = memory_bound(ps[m].sparsity.effective_delta(), eta, g_hat,
                                          static_cast<double>(cfg_.H));
          if (rhs > 0.0) res.invariants.max_memory_ratio = std::max(res.invariants.max_memory_ratio, lhs / rhs);
          if (lhs > rhs * (1.0 + 1e-12)) res.invariants.violations.push_back({"bounded_memory", t, m, lhs, rhs});
        }
      }
      if (snapshot_stride != 0 && sync_index % snapshot_stride == 0) res.snapshots.push_back(w);
      ++sync_index;
    } else {
      for (std::size_t m = 0; m < M; ++m) ps[m].w_hat.swap(w_half[m]);
    }
    if (!std::isfinite(loss)) throw DivergenceError(t, "global loss is non-finite");

    if (opt_.check_invariants) {
      ++res.invariants.steps_checked;
      const double r = virtual_sequence_residual(ps, w_virtual);
      res.invariants.max_virtual_residual = std::max(res.invariants.max_virtual_residual, r);
      if (r > opt_.virtual_tol) res.invariants.violations.push_back({"virtual_sequence", t, 0, r, opt_.virtual_tol});
    }

    RoundTrace rec;
    rec.t = t;
    rec.batch_size = batch_size_at(cfg_, t, participant_cap(cfg_, min_shard));
    rec.synced = sync;
    rec.loss = loss;
    if (opt_.record_grad_norms) {
      double acc = 0.0;
      for (const double g : grad_sq_full) acc += g;
      rec.grad_norm_sq_mean = acc * inv_m;
    }
    for (std::size_t m = 0; m < M; ++m) {
      rec.bits_total += bits[m];
      rec.energy_comm_j += comm_j[m];
      rec.energy_comp_j += comp_j[m];
    }
    rec.bits_per_participant = bits;
    rec.comm_j_per_participant = comm_j;
    rec.comp_j_per_participant = comp_j;
    res.trace.push_back(std::move(rec));
    if (opt_.record_server_history) res.server_history.push_back(w);

    if (cfg_.target_loss && !res.target_reached_at && loss <= *cfg_.target_loss) {
      res.target_reached_at = t;
      if (cfg_.stop_at_target) break;
    }
  }
  res.w = std::move(w);
  res.max_batch_grad_norm = g_hat;
  return res;
}

RunResult run_ftlsgd_db(const LossModel& model, const Dataset& data, const Partition& part,
                        std::span<const double> deltas, const EnergyModel& energy,
                        const TrainConfig& cfg, const SeedSpec& seed, const RunOptions& options) {
  return Engine(model, data, part, deltas, energy, cfg, seed, options).run();
}

std::vector<ParamVector> reference_sync_sgd(const LossModel& model, const Dataset& data,
                                            const Partition& part, const TrainConfig& cfg,
                                            const SeedSpec& seed, const ParamVector& w0) {
  cfg.validate();
  const std::size_t M = part.num_shards();
  const std::size_t d = w0.size();
  std::vector<RandomStream> rngs;
  for (std::size_t m = 0; m < M; ++m) rngs.push_back(seed.stream(minibatch_label(m)));
  ParamVector w = w0;
  std::vector<ParamVector> history;
  history.reserve(cfg.T);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    ParamVector sum(d, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t b = batch_size_at(cfg, t, participant_cap(cfg, part.shards[m].size()));
      const auto batch = sample_without_replacement(part.shards[m], b, rngs[m]);
      const auto g = loss_and_grad(model, w, batch, data).grad;
      for (std::size_t i = 0; i < d; ++i) {
        const double worker = w[i] - cfg.eta * g[i];
        sum[i] += w[i] - worker;
      }
    }
    for (std::size_t i = 0; i < d; ++i) w[i] -= sum[i] / static_cast<double>(M);
    history.push_back(w);
  }
  return history;
}

void write_trace_csv(std::ostream& out, std::span<const RoundTrace> trace) {
  out << "t,loss,grad_norm_sq_mean,bits_total,energy_comm_J,energy_comp_J\r\n";
  char buf[256];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\r\n", r.t, r.loss, r.grad_norm_sq_mean,
                  r.bits_total, r.energy_comm_j, r.energy_comp_j);
    out << buf;
  }
}

void write_trace_jsonl(std::ostream& out, std::span<const RoundTrace> trace) {
  for (const auto& r : trace) {
    nlohmann::json j;
    j["t"] = r.t;
    j["batch_size"] = r.batch_size;
    j["synced"] = r.synced;
    j["loss"] = r.loss;
    j["grad_norm_sq_mean"] = r.grad_norm_sq_mean;
    j["bits_total"] = r.bits_total;
    j["energy_comm_J"] = r.energy_comm_j;
    j["energy_comp_J"] = r.energy_comp_j;
    j["bits_per_participant"] = r.bits_per_participant;
    j["energy_comm_J_per_participant"] = r.comm_j_per_participant;
    j["energy_comp_J_per_participant"] = r.comp_j_per_participant;
    out << j.dump() << '\n';
  }
}

}  // namespace flexspar
