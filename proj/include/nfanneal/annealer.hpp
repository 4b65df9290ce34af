#ifndef NFANNEAL_ANNEALER_HPP
#define NFANNEAL_ANNEALER_HPP

// Adaptive annealing driver: trains a flow against p_b p_u^beta while raising
// beta from 0 to 1 at a pace set by the effective sample size of fresh batches.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nfanneal/adam.hpp"
#include "nfanneal/archive.hpp"
#include "nfanneal/errors.hpp"
#include "nfanneal/evidence.hpp"
#include "nfanneal/flow.hpp"
#include "nfanneal/random.hpp"
#include "nfanneal/schedule.hpp"
#include "nfanneal/target.hpp"
#include "nfanneal/weights.hpp"

namespace nfanneal {

/// How beta evolves. Only kAdaptive is a production path; the other two
/// reproduce fixed-temperature and preset-ladder baselines.
enum class ScheduleMode { kAdaptive, kFixed, kPreset };

struct AnnealConfig {
  std::size_t layers = 8;
  std::size_t batch_size = 1024;        // B
  std::size_t update_steps = 50;        // J
  std::size_t window = 20;              // M
  double ess_threshold_ratio = 0.4;     // n* / B
  double gamma = 0.95;
  double ema_decay = 0.01;              // lambda
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t stall_batches = 200;
  /// Batches trained at beta = 1 before the run may stop on the EMA criterion.
  std::size_t min_final_batches = 20;
  /// Fresh samples per stage checkpoint for thermodynamic integration; 0 means 10 B.
  std::size_t ti_samples = 0;
  std::size_t threads = 1;

  ScheduleMode mode = ScheduleMode::kAdaptive;
  double fixed_beta = 1.0;
  std::size_t fixed_batches = 0;
  std::size_t preset_stages = 0;
  double preset_exponent = 4.0;
  std::size_t preset_batches_per_stage = 1;

  double ess_threshold() const { return ess_threshold_ratio * static_cast<double>(batch_size); }
  std::size_t ti_sample_count() const { return ti_samples == 0 ? 10 * batch_size : ti_samples; }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw InputError(what);
    };
    require(layers >= 1, "layers must be at least 1");
    require(batch_size >= 2, "batch_size must be at least 2");
    require(update_steps >= 1, "update_steps must be at least 1");
    require(window >= 1, "window must be at least 1");
    require(ess_threshold_ratio > 0.0 && ess_threshold_ratio < 1.0,
            "ess_threshold must lie in (0, 1)");
    require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    require(ema_decay > 0.0 && ema_decay <= 1.0, "ema_decay must lie in (0, 1]");
    require(adam.learning_rate > 0.0, "learning_rate must be positive");
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "beta1 must lie in [0, 1)");
    require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "beta2 must lie in [0, 1)");
    require(adam.clip_norm > 0.0, "clip_norm must be positive");
    require(stall_batches >= 1, "stall_batches must be at least 1");
    require(threads >= 1, "threads must be at least 1");
    if (mode == ScheduleMode::kFixed) {
      require(fixed_beta >= 0.0 && fixed_beta <= 1.0, "fixed_beta must lie in [0, 1]");
      require(fixed_batches >= 1, "fixed_batches must be at least 1");
    }
    if (mode == ScheduleMode::kPreset) {
      require(preset_stages >= 1, "preset_stages must be at least 1");
      require(preset_batches_per_stage >= 1, "preset_batches_per_stage must be at least 1");
    }
  }
};

/// Live state of the annealing loop.
struct AnnealState {
  double beta = 0.0;
  double ema_ess = 0.0;
  std::size_t batch = 0;
};

struct BatchRecord {
  std::size_t batch = 0;
  double beta = 0.0;        // beta the batch was weighted at (before any update)
  double ess = 0.0;         // fresh-batch n_eff
  double ema_ess = 0.0;
  std::size_t likelihood_evaluations = 0;  // cumulative
  double loss = std::numeric_limits<double>::quiet_NaN();  // last training step
  bool beta_updated = false;
};

/// One annealing stage: the flow trained at a fixed beta, snapshotted when
/// beta moved on (or when the run ended).
struct StageRecord {
  std::size_t stage = 0;
  double beta = 0.0;
  std::size_t first_batch = 0;
  std::size_t batches = 0;
  std::size_t likelihood_evaluations = 0;  // cumulative at the snapshot
  FlowModel checkpoint;
};

struct AnnealObserver {
  std::function<void(const BatchRecord&)> on_batch;
  std::function<void(const StageRecord&)> on_stage;
};

struct AnnealResult {
  std::vector<BatchRecord> batches;
  std::vector<StageRecord> stages;
  FlowModel final_model;
  SampleArchive archive{1};
  std::size_t likelihood_evaluations = 0;
};

namespace detail {

inline Eigen::VectorXd minibatch_weights(const Eigen::VectorXd& log_weights,
                                         const std::vector<Eigen::Index>& picks) {
  Eigen::VectorXd lw(static_cast<Eigen::Index>(picks.size()));
  for (std::size_t i = 0; i < picks.size(); ++i) lw[static_cast<Eigen::Index>(i)] = log_weights[picks[i]];
  return normalize_log_weights(lw);
}

}  // namespace detail

/// Runs the annealing protocol on `target`.
///
/// Each iteration samples B points from the current flow, evaluates prior and
/// likelihood once per point, updates the ESS moving average and, when it
/// exceeds n* (with a one-batch cooldown after every change), raises beta with
/// solve_beta on the fresh batch. The batch then joins the sliding archive and
/// the flow takes J Adam steps on size-B mini-batches drawn from the archive
/// with mixture importance weights. After beta reaches 1 the run continues for
/// at least min_final_batches and stops once the moving average exceeds n*.
inline AnnealResult anneal_run(const AnnealedTarget& target, const AnnealConfig& config,
                               const AnnealObserver& observer = {}) {
  config.validate();
  const std::size_t dim = target.dim();
  if (dim % 2 != 0) throw InputError("flow dimension must be even");

  Rng rng(config.seed);
  AnnealResult result;
  result.archive = SampleArchive(config.window);
  FlowModel model = FlowModel::initialized(dim, config.layers, rng);
  AdamState adam;
  AnnealState state;
  const double threshold = config.ess_threshold();
  const auto batch_n = config.batch_size;

  std::size_t stage_start = 0;
  std::size_t cooldown = 0;
  std::size_t since_progress = 0;
  std::size_t batches_at_one = 0;
  std::size_t preset_stage = 0;

  if (config.mode == ScheduleMode::kFixed) state.beta = config.fixed_beta;

  auto close_stage = [&](std::size_t end_batch) {
    StageRecord rec;
    rec.stage = result.stages.size();
    rec.beta = state.beta;
    rec.first_batch = stage_start;
    rec.batches = end_batch - stage_start;
    rec.likelihood_evaluations = result.likelihood_evaluations;
    rec.checkpoint = model;
    if (observer.on_stage) observer.on_stage(rec);
    result.stages.push_back(std::move(rec));
    stage_start = end_batch;
  };

  bool done = false;
  while (!done) {
    auto draw = sample(model, batch_n, rng);
    auto terms = evaluate_batch(target, draw.x, config.threads);
    result.likelihood_evaluations += batch_n;

    const Eigen::VectorXd lw = terms.log_base + state.beta * terms.log_update - draw.log_q;
    const double n_eff = ess_from_log_weights(lw);
    state.ema_ess = ema_update(state.ema_ess, n_eff, config.ema_decay);

    BatchRecord rec;
    rec.batch = state.batch;
    rec.beta = state.beta;
    rec.ess = n_eff;
    rec.ema_ess = state.ema_ess;

    const double old_beta = state.beta;
    switch (config.mode) {
      case ScheduleMode::kAdaptive:
        if (state.beta < 1.0) {
          if (cooldown > 0) {
            --cooldown;
          } else if (state.ema_ess > threshold) {
            try {
              const double next =
                  solve_beta(terms.log_base, terms.log_update, draw.log_q, state.beta, config.gamma);
              if (next > state.beta) {
                close_stage(state.batch);
                state.beta = std::min(1.0, next);
                cooldown = 1;
              }
            } catch (const ScheduleStallError&) {
              // degenerate fresh batch; counts towards the stall limit
            }
          }
        } else {
          ++batches_at_one;
          if (cooldown > 0) {
            --cooldown;
          } else if (batches_at_one >= config.min_final_batches && state.ema_ess > threshold) {
            done = true;
          }
        }
        break;
      case ScheduleMode::kFixed:
        if (state.batch + 1 >= config.fixed_batches) done = true;
        break;
      case ScheduleMode::kPreset: {
        const std::size_t per = config.preset_batches_per_stage;
        const std::size_t stage = state.batch / per;
        if (stage != preset_stage) {
          close_stage(state.batch);
          preset_stage = stage;
          state.beta = std::pow(static_cast<double>(stage) / static_cast<double>(config.preset_stages),
                                config.preset_exponent);
        }
        if (state.batch + 1 >= (config.preset_stages + 1) * per) done = true;
        break;
      }
    }
    rec.beta_updated = state.beta != old_beta;
    since_progress = rec.beta_updated ? 0 : since_progress + 1;

    result.archive.append(std::move(draw.x), std::move(terms.log_base),
                          std::move(terms.log_update), model, state.batch, state.batch);

    if (!done) {
      const Eigen::VectorXd archive_lw = result.archive.log_weights(state.beta);
      const Batch pool = result.archive.samples();
      const auto pool_n = static_cast<std::size_t>(pool.cols());
      std::vector<Eigen::Index> picks(batch_n);
      Batch mini(dim, static_cast<Eigen::Index>(batch_n));
      for (std::size_t step = 0; step < config.update_steps; ++step) {
        for (std::size_t i = 0; i < batch_n; ++i) {
          picks[i] = static_cast<Eigen::Index>(rng.index(pool_n));
          mini.col(static_cast<Eigen::Index>(i)) = pool.col(picks[i]);
        }
        const auto w = detail::minibatch_weights(archive_lw, picks);
        auto lg = loss_and_grad(model, mini, w);
        rec.loss = lg.loss;
        adam_step(model.parameters(), std::move(lg.grad), adam, config.adam);
      }
    }

    rec.likelihood_evaluations = result.likelihood_evaluations;
    if (observer.on_batch) observer.on_batch(rec);
    result.batches.push_back(rec);
    ++state.batch;

    if (!done && since_progress >= config.stall_batches && config.mode == ScheduleMode::kAdaptive) {
      throw ScheduleStallError("beta stuck at " + std::to_string(state.beta) + " for " +
                               std::to_string(since_progress) + " batches");
    }
  }
  close_stage(state.batch);
  result.final_model = model;
  return result;
}

/// Fresh draws from one stage checkpoint with cached target components.
struct StageDraw {
  double beta = 0.0;
  Batch samples;
  Eigen::VectorXd log_base;
  Eigen::VectorXd log_update;
  Eigen::VectorXd log_q;

  double integrand() const { return reweight_expectation(log_base, log_update, log_q, beta, log_update); }
};

inline StageDraw draw_stage(const AnnealedTarget& target, const StageRecord& stage, std::size_t n,
                            Rng& rng, std::size_t threads = 1) {
  auto s = sample(stage.checkpoint, n, rng);
  auto terms = evaluate_batch(target, s.x, threads);
  return {stage.beta, std::move(s.x), std::move(terms.log_base), std::move(terms.log_update),
          std::move(s.log_q)};
}

/// Thermodynamic-integration ladder from the stage checkpoints: each stage's
/// E_beta[log p_u] is estimated by reweighting n fresh draws from the flow
/// trained at that beta. `on_draw` sees every draw (e.g. to keep the final one).
inline TiLadder nf_ti_ladder(const AnnealedTarget& target, const std::vector<StageRecord>& stages,
                             std::size_t n, std::uint64_t seed, std::size_t threads = 1,
                             const std::function<void(const StageDraw&)>& on_draw = {}) {
  Rng rng(seed);
  TiLadder ladder;
  for (const auto& stage : stages) {
    const auto draw = draw_stage(target, stage, n, rng, threads);
    ladder.points.push_back({stage.beta, draw.integrand(), n});
    if (on_draw) on_draw(draw);
  }
  return ladder;
}

}  // namespace nfanneal

#endif  // NFANNEAL_ANNEALER_HPP
