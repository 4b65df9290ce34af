#ifndef NFANNEAL_EVIDENCE_HPP
#define NFANNEAL_EVIDENCE_HPP

// Marginal-likelihood estimators: importance sampling with optional max-ESS
// pruning, and thermodynamic integration over a beta ladder.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"
#include "nfanneal/weights.hpp"

namespace nfanneal {

/// Samples with their full-posterior numerator and proposal log-densities.
struct WeightedSampleSet {
  Eigen::VectorXd log_target;    // log prior + log likelihood
  Eigen::VectorXd log_proposal;  // log q (flow or mixture)

  /// log target - log proposal, skipping rows whose target is -inf.
  std::vector<double> log_weights() const {
    if (log_target.size() != log_proposal.size()) {
      throw InputError("target and proposal columns differ in length");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(log_target.size()));
    for (Eigen::Index i = 0; i < log_target.size(); ++i) {
      if (log_target[i] == -std::numeric_limits<double>::infinity()) continue;
      out.push_back(log_target[i] - log_proposal[i]);
    }
    return out;
  }
};

enum class EvidenceMethod { kImportanceSampling, kImportanceSamplingPruned, kThermodynamicIntegration };

inline std::string to_string(EvidenceMethod m) {
  switch (m) {
    case EvidenceMethod::kImportanceSampling: return "is";
    case EvidenceMethod::kImportanceSamplingPruned: return "is-pruned";
    case EvidenceMethod::kThermodynamicIntegration: return "ti";
  }
  return "unknown";
}

struct EvidenceEstimate {
  double log_evidence = 0.0;
  EvidenceMethod method = EvidenceMethod::kImportanceSampling;
  std::size_t total = 0;     // samples or ladder points considered
  std::size_t excluded = 0;  // pruned samples or dropped ladder points
  double ess_before = 0.0;   // importance sampling only
  double ess_after = 0.0;
  double unpruned_log_evidence = 0.0;
};

struct PruneResult {
  std::vector<std::size_t> kept;  // indices into the input, ascending
  std::size_t removed = 0;
  double ess_before = 0.0;
  double ess_after = 0.0;
};

/// Removes the k largest weights, with k chosen to maximize the ESS of the
/// rest (smallest k on ties). Every k in [0, n-1] is scanned exactly using
/// suffix sums over the weights sorted in descending order.
inline PruneResult prune_max_ess(std::span<const double> log_weights) {
  const std::size_t n = log_weights.size();
  if (n == 0) throw InputError("prune_max_ess needs at least one weight");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return log_weights[a] > log_weights[b]; });
  const double peak = log_weights[order[0]];
  if (!(peak > -std::numeric_limits<double>::infinity())) {
    throw DegenerateWeightsError("all importance weights are zero");
  }
  // suffix sums of w and w^2 from the smallest weight upwards
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    const double w = std::exp(log_weights[order[i]] - peak);
    s1[i] = s1[i + 1] + w;
    s2[i] = s2[i + 1] + w * w;
  }
  PruneResult out;
  out.ess_before = s1[0] * s1[0] / s2[0];
  double best = out.ess_before;
  std::size_t best_k = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (!(s2[k] > 0.0)) break;
    const double e = s1[k] * s1[k] / s2[k];
    if (e > best) {
      best = e;
      best_k = k;
    }
  }
  out.removed = best_k;
  out.ess_after = best;
  out.kept.assign(order.begin() + static_cast<std::ptrdiff_t>(best_k), order.end());
  std::sort(out.kept.begin(), out.kept.end());
  return out;
}

/// log P(D|M) as the log of the mean importance weight. With prune = true the
/// largest weights are first removed by prune_max_ess; the unpruned estimate
/// is always reported alongside.
inline EvidenceEstimate evidence_is(const WeightedSampleSet& set, bool prune = false) {
  const auto lw = set.log_weights();
  if (lw.empty()) throw InputError("importance sampling needs at least one sample");
  EvidenceEstimate est;
  est.total = lw.size();
  est.unpruned_log_evidence = log_mean_exp(lw);
  est.ess_before = ess_from_log_weights(lw);
  if (!prune) {
    est.method = EvidenceMethod::kImportanceSampling;
    est.log_evidence = est.unpruned_log_evidence;
    est.ess_after = est.ess_before;
    return est;
  }
  const auto pr = prune_max_ess(lw);
  std::vector<double> kept;
  kept.reserve(pr.kept.size());
  for (std::size_t i : pr.kept) kept.push_back(lw[i]);
  est.method = EvidenceMethod::kImportanceSamplingPruned;
  est.log_evidence = log_mean_exp(kept);
  est.excluded = pr.removed;
  est.ess_after = pr.ess_after;
  return est;
}

/// Self-normalized estimate of E_beta[f] from samples with cached log p_b,
/// log p_u and proposal log q.
inline double reweight_expectation(const Eigen::VectorXd& log_base,
                                   const Eigen::VectorXd& log_update,
                                   const Eigen::VectorXd& log_q, double beta,
                                   const Eigen::VectorXd& values) {
  if (log_base.size() != values.size() || log_update.size() != values.size() ||
      log_q.size() != values.size()) {
    throw InputError("reweight_expectation inputs differ in length");
  }
  const Eigen::VectorXd w = normalize_log_weights(Eigen::VectorXd(log_base + beta * log_update - log_q));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0) acc += w[i] * values[i];
  }
  return acc;
}

struct TiPoint {
  double beta = 0.0;
  double integrand = 0.0;  // E_beta[log likelihood]
  std::size_t samples = 0;
};

struct TiLadder {
  std::vector<TiPoint> points;

  void validate() const {
    if (points.size() < 2) throw InsufficientLadderError("ladder needs at least two points");
    if (points.front().beta != 0.0 || points.back().beta != 1.0) {
      throw InputError("ladder must start at beta = 0 and end at beta = 1");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].beta > points[i - 1].beta)) {
        throw InputError("ladder betas must be strictly increasing");
      }
    }
  }
};

inline constexpr double kDefaultTiCutoff = -1e5;

/// Trapezoid rule over the (beta, integrand) points whose integrand is at
/// least `cutoff`; points below it are dropped and counted.
inline EvidenceEstimate evidence_ti(const TiLadder& ladder, double cutoff = kDefaultTiCutoff) {
  ladder.validate();
  std::vector<TiPoint> kept;
  for (const auto& p : ladder.points) {
    if (std::isfinite(p.integrand) && p.integrand >= cutoff) kept.push_back(p);
  }
  EvidenceEstimate est;
  est.method = EvidenceMethod::kThermodynamicIntegration;
  est.total = ladder.points.size();
  est.excluded = ladder.points.size() - kept.size();
  if (kept.size() < 2) {
    throw InsufficientLadderError(std::to_string(kept.size()) +
                                  " ladder point(s) survive the integrand cutoff");
  }
  double integral = 0.0;
  for (std::size_t i = 1; i < kept.size(); ++i) {
    integral += 0.5 * (kept[i].beta - kept[i - 1].beta) * (kept[i].integrand + kept[i - 1].integrand);
  }
  est.log_evidence = integral;
  est.unpruned_log_evidence = integral;
  return est;
}

}  // namespace nfanneal

#endif  // NFANNEAL_EVIDENCE_HPP
