#ifndef NFANNEAL_MCMC_HPP
#define NFANNEAL_MCMC_HPP

// Annealed affine-invariant ensemble MCMC: stretch and differential-evolution
// moves under Metropolis-Hastings on p_b p_u^beta, with a power-law beta ladder.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"
#include "nfanneal/evidence.hpp"
#include "nfanneal/random.hpp"
#include "nfanneal/target.hpp"

namespace nfanneal {

struct McmcConfig {
  std::size_t walkers = 16;
  std::size_t sweeps_per_stage = 1500;
  std::size_t stages = 1000;
  double schedule_exponent = 4.0;
  double stretch_scale = 2.0;
  std::optional<double> de_scale;  // defaults to 2.38 / sqrt(2 d)
  double de_jitter_variance = 1e-5;
  /// Probability that an update uses the stretch move rather than DE.
  double stretch_probability = 0.5;
  std::uint64_t seed = 0;
  /// Keep every thin-th sweep for stage averages and exported chains.
  std::size_t thin = 1;

  double de_scale_for(std::size_t dim) const {
    return de_scale.value_or(2.38 / std::sqrt(2.0 * static_cast<double>(dim)));
  }

  /// beta of stage s; stage 0 is the prior.
  double beta(std::size_t stage) const {
    return std::pow(static_cast<double>(stage) / static_cast<double>(stages), schedule_exponent);
  }

  void validate() const {
    if (walkers < 4) throw InputError("ensemble needs at least 4 walkers");
    if (sweeps_per_stage < 1) throw InputError("sweeps_per_stage must be at least 1");
    if (stages < 1) throw InputError("stages must be at least 1");
    if (!(schedule_exponent > 0.0)) throw InputError("schedule exponent must be positive");
    if (!(stretch_scale > 1.0)) throw InputError("stretch scale must exceed 1");
    if (!(de_jitter_variance >= 0.0)) throw InputError("DE jitter variance must be nonnegative");
    if (thin < 1) throw InputError("thin must be at least 1");
    if (!(stretch_probability >= 0.0 && stretch_probability <= 1.0)) {
      throw InputError("stretch probability must lie in [0, 1]");
    }
  }
};

/// Walker positions (one per column) with cached log p_b and log p_u.
class WalkerEnsemble {
 public:
  WalkerEnsemble() = default;

  /// Walkers drawn i.i.d. from the target's base distribution.
  WalkerEnsemble(const AnnealedTarget& target, std::size_t walkers, Rng& rng)
      : positions_(target.dim(), static_cast<Eigen::Index>(walkers)),
        log_base_(static_cast<Eigen::Index>(walkers)),
        log_update_(static_cast<Eigen::Index>(walkers)) {
    for (Eigen::Index w = 0; w < positions_.cols(); ++w) {
      target.sample_base(rng, std::span<double>(positions_.col(w).data(), positions_.rows()));
    }
    for (Eigen::Index w = 0; w < positions_.cols(); ++w) refresh(target, static_cast<std::size_t>(w));
  }

  WalkerEnsemble(const AnnealedTarget& target, Eigen::MatrixXd positions)
      : positions_(std::move(positions)),
        log_base_(positions_.cols()),
        log_update_(positions_.cols()) {
    for (Eigen::Index w = 0; w < positions_.cols(); ++w) refresh(target, static_cast<std::size_t>(w));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(positions_.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(positions_.rows()); }
  const Eigen::MatrixXd& positions() const noexcept { return positions_; }
  Eigen::VectorXd position(std::size_t w) const { return positions_.col(static_cast<Eigen::Index>(w)); }
  double log_base(std::size_t w) const { return log_base_[static_cast<Eigen::Index>(w)]; }
  double log_update(std::size_t w) const { return log_update_[static_cast<Eigen::Index>(w)]; }
  double log_target(std::size_t w, double beta) const { return log_base(w) + beta * log_update(w); }

  void set(std::size_t w, const Eigen::VectorXd& x, const TargetTerms& t) {
    positions_.col(static_cast<Eigen::Index>(w)) = x;
    log_base_[static_cast<Eigen::Index>(w)] = t.log_base;
    log_update_[static_cast<Eigen::Index>(w)] = t.log_update;
  }

 private:
  void refresh(const AnnealedTarget& target, std::size_t w) {
    const auto col = positions_.col(static_cast<Eigen::Index>(w));
    const auto t = target.terms(std::span<const double>(col.data(), col.size()));
    log_base_[static_cast<Eigen::Index>(w)] = t.log_base;
    log_update_[static_cast<Eigen::Index>(w)] = t.log_update;
  }

  Eigen::MatrixXd positions_;
  Eigen::VectorXd log_base_;
  Eigen::VectorXd log_update_;
};

struct Proposal {
  Eigen::VectorXd position;
  double log_factor = 0.0;  // log proposal-density ratio entering the MH test
};

/// Z with density proportional to 1/sqrt(z) on [1/a, a], by inverse CDF.
inline double draw_stretch_factor(double a, Rng& rng) {
  const double u = rng.uniform();
  const double r = (a - 1.0) * u + 1.0;
  return r * r / a;
}

/// y = partner + z (walker - partner), log factor (d - 1) ln z.
inline Proposal stretch_proposal(const Eigen::VectorXd& walker, const Eigen::VectorXd& partner,
                                 double z) {
  return {partner + z * (walker - partner),
          (static_cast<double>(walker.size()) - 1.0) * std::log(z)};
}

inline std::size_t draw_other(std::size_t n, std::size_t exclude, Rng& rng) {
  std::size_t j = rng.index(n - 1);
  return j >= exclude ? j + 1 : j;
}

inline Proposal stretch_move(std::size_t walker, const WalkerEnsemble& ensemble, double a,
                             Rng& rng) {
  if (ensemble.size() < 2) throw InputError("stretch move needs at least two walkers");
  const std::size_t partner = draw_other(ensemble.size(), walker, rng);
  const double z = draw_stretch_factor(a, rng);
  return stretch_proposal(ensemble.position(walker), ensemble.position(partner), z);
}

/// y = x + gamma (x_a - x_b) + eps, eps ~ N(0, jitter_variance I), with a != b
/// both different from the moving walker. Symmetric, so the MH factor is 0.
inline Proposal de_move(std::size_t walker, const WalkerEnsemble& ensemble, double gamma,
                        double jitter_variance, Rng& rng) {
  const std::size_t n = ensemble.size();
  if (n < 3) throw InputError("differential-evolution move needs at least three walkers");
  const std::size_t a = draw_other(n, walker, rng);
  std::size_t b = rng.index(n - 2);
  for (std::size_t skip : {std::min(a, walker), std::max(a, walker)}) {
    if (b >= skip) ++b;
  }
  Eigen::VectorXd y = ensemble.position(walker) +
                      gamma * (ensemble.position(a) - ensemble.position(b));
  const double sd = std::sqrt(jitter_variance);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * rng.normal();
  return {std::move(y), 0.0};
}

/// Accepts with probability min(1, exp(new - old + log_factor)).
inline bool mh_accept(double log_target_new, double log_target_old, double log_factor, Rng& rng) {
  if (std::isnan(log_target_new) || log_target_new == -std::numeric_limits<double>::infinity()) {
    return false;
  }
  const double log_ratio = log_target_new - log_target_old + log_factor;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

struct McmcStage {
  std::size_t stage = 0;
  double beta = 0.0;
  std::size_t attempts = 0;
  std::size_t accepts = 0;
  double mean_log_likelihood = 0.0;  // over stored samples
  std::size_t stored_samples = 0;

  double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepts) / static_cast<double>(attempts);
  }
};

/// One stored walker state, handed to the sample sink.
struct McmcSample {
  std::size_t stage = 0;
  double beta = 0.0;
  std::size_t sweep = 0;
  std::size_t walker = 0;
  std::span<const double> position;
  double log_base = 0.0;
  double log_update = 0.0;
  bool accepted = false;
};

struct McmcResult {
  std::vector<McmcStage> stages;
  TiLadder ladder;
  /// Stored chain of each walker in the final stage: dim x stored sweeps.
  std::vector<Eigen::MatrixXd> final_chains;
  WalkerEnsemble ensemble;
  std::size_t likelihood_evaluations = 0;
};

using McmcSink = std::function<void(const McmcSample&)>;
using McmcStageObserver = std::function<void(const McmcStage&)>;

/// Runs the ensemble through beta_0 = 0 followed by beta_s = (s/S)^p for
/// s = 1..S. Each sweep updates every walker once, in order, against the
/// current ensemble, choosing a stretch move with probability
/// stretch_probability and a DE move otherwise.
inline McmcResult run_annealed_ensemble(const AnnealedTarget& target, const McmcConfig& config,
                                        const McmcSink& sink = {},
                                        const McmcStageObserver& on_stage = {}) {
  config.validate();
  const std::size_t dim = target.dim();
  const double de_gamma = config.de_scale_for(dim);
  Rng rng(config.seed);
  McmcResult result;
  result.ensemble = WalkerEnsemble(target, config.walkers, rng);
  result.likelihood_evaluations = config.walkers;
  auto& ens = result.ensemble;
  const std::size_t stored_per_walker = (config.sweeps_per_stage + config.thin - 1) / config.thin;
  std::vector<bool> accepted(config.walkers, false);

  for (std::size_t s = 0; s <= config.stages; ++s) {
    McmcStage stage;
    stage.stage = s;
    stage.beta = config.beta(s);
    const bool last = s == config.stages;
    if (last) {
      result.final_chains.assign(config.walkers,
                                 Eigen::MatrixXd(dim, static_cast<Eigen::Index>(stored_per_walker)));
    }
    double loglik_sum = 0.0;
    for (std::size_t sweep = 0; sweep < config.sweeps_per_stage; ++sweep) {
      for (std::size_t w = 0; w < config.walkers; ++w) {
        const Proposal prop = rng.uniform() < config.stretch_probability
                                  ? stretch_move(w, ens, config.stretch_scale, rng)
                                  : de_move(w, ens, de_gamma, config.de_jitter_variance, rng);
        const auto t = target.terms(std::span<const double>(prop.position.data(), dim));
        ++result.likelihood_evaluations;
        ++stage.attempts;
        const double new_target = t.log_base + stage.beta * t.log_update;
        accepted[w] = mh_accept(new_target, ens.log_target(w, stage.beta), prop.log_factor, rng);
        if (accepted[w]) {
          ens.set(w, prop.position, t);
          ++stage.accepts;
        }
      }
      if (sweep % config.thin != 0) continue;
      const std::size_t slot = sweep / config.thin;
      for (std::size_t w = 0; w < config.walkers; ++w) {
        loglik_sum += ens.log_update(w);
        ++stage.stored_samples;
        if (last) {
          result.final_chains[w].col(static_cast<Eigen::Index>(slot)) =
              ens.positions().col(static_cast<Eigen::Index>(w));
        }
        if (sink) {
          const auto col = ens.positions().col(static_cast<Eigen::Index>(w));
          sink({s, stage.beta, sweep, w, std::span<const double>(col.data(), dim), ens.log_base(w),
                ens.log_update(w), accepted[w]});
        }
      }
    }
    stage.mean_log_likelihood = loglik_sum / static_cast<double>(stage.stored_samples);
    result.ladder.points.push_back({stage.beta, stage.mean_log_likelihood, stage.stored_samples});
    if (on_stage) on_stage(stage);
    result.stages.push_back(stage);
  }
  return result;
}

/// Autocorrelation ESS N / (1 + 2 sum rho_tau), truncating the sum with
/// Geyer's initial positive sequence over pairs rho_{2t} + rho_{2t+1}.
inline double mcmc_ess(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 10) throw InputError("autocorrelation ESS needs at least 10 samples");
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> d(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = chain[i] - mean;
    var += d[i] * d[i];
  }
  if (!(var > 0.0)) throw UndefinedEssError("chain has zero variance");
  auto rho = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) acc += d[t] * d[t + lag];
    return acc / var;
  };
  double pair_sum = 0.0;
  for (std::size_t t = 0; 2 * t + 1 < n; ++t) {
    const double gamma = rho(2 * t) + rho(2 * t + 1);
    if (!(gamma > 0.0)) break;
    pair_sum += gamma;
  }
  const double tau = 2.0 * pair_sum - 1.0;
  return static_cast<double>(n) / tau;
}

/// Sum over walkers of each walker chain's ESS for one parameter. A walker
/// that never moved contributes a single sample.
inline double ensemble_ess(const std::vector<Eigen::MatrixXd>& chains, std::size_t parameter) {
  double total = 0.0;
  for (const auto& chain : chains) {
    const Eigen::VectorXd row = chain.row(static_cast<Eigen::Index>(parameter)).transpose();
    try {
      total += mcmc_ess(std::span<const double>(row.data(), row.size()));
    } catch (const UndefinedEssError&) {
      total += 1.0;
    }
  }
  return total;
}

}  // namespace nfanneal

#endif  // NFANNEAL_MCMC_HPP
