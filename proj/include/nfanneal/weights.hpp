#ifndef NFANNEAL_WEIGHTS_HPP
#define NFANNEAL_WEIGHTS_HPP

// Importance-weight arithmetic: log-sum-exp, normalization, effective sample
// size, and its exponential moving average.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"

namespace nfanneal {

inline double log_sum_exp(std::span<const double> values) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : values) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

inline double log_sum_exp(const Eigen::VectorXd& values) {
  return log_sum_exp(std::span<const double>(values.data(), values.size()));
}

inline double log_mean_exp(std::span<const double> values) {
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

/// Normalized weights from log-weights. Throws if every weight is zero.
inline Eigen::VectorXd normalize_log_weights(std::span<const double> log_weights) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) peak = std::max(peak, v);
  if (!(peak > -std::numeric_limits<double>::infinity()) || std::isnan(peak)) {
    throw DegenerateWeightsError("all importance weights are zero");
  }
  Eigen::VectorXd w(log_weights.size());
  for (std::size_t i = 0; i < log_weights.size(); ++i) w[i] = std::exp(log_weights[i] - peak);
  return w / w.sum();
}

inline Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_weights) {
  return normalize_log_weights(std::span<const double>(log_weights.data(), log_weights.size()));
}

/// Effective sample size (sum w)^2 / sum w^2 of nonnegative weights.
inline double ess(std::span<const double> weights) {
  double peak = 0.0;
  for (double w : weights) {
    if (w < 0.0 || std::isnan(w)) throw InputError("importance weights must be nonnegative");
    peak = std::max(peak, w);
  }
  if (peak == 0.0) throw DegenerateWeightsError("all importance weights are zero");
  double s1 = 0.0, s2 = 0.0;
  for (double w : weights) {
    double r = w / peak;
    s1 += r;
    s2 += r * r;
  }
  return s1 * s1 / s2;
}

/// Effective sample size from log-weights, with max subtraction.
inline double ess_from_log_weights(std::span<const double> log_weights) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) peak = std::max(peak, v);
  if (!(peak > -std::numeric_limits<double>::infinity()) || std::isnan(peak)) {
    throw DegenerateWeightsError("all importance weights are zero");
  }
  double s1 = 0.0, s2 = 0.0;
  for (double v : log_weights) {
    double r = std::exp(v - peak);
    s1 += r;
    s2 += r * r;
  }
  return s1 * s1 / s2;
}

inline double ess_from_log_weights(const Eigen::VectorXd& log_weights) {
  return ess_from_log_weights(std::span<const double>(log_weights.data(), log_weights.size()));
}

/// One step of the ESS moving average: decay * current + (1 - decay) * average.
inline double ema_update(double average, double current, double decay) {
  if (!(decay > 0.0 && decay <= 1.0)) throw InputError("EMA decay must lie in (0, 1]");
  return decay * current + (1.0 - decay) * average;
}

/// log(sum_k N_k q_k(x) / sum_k N_k) for one sample's row of model log-densities.
inline double mixture_log_density(std::span<const double> log_densities,
                                  std::span<const double> counts) {
  if (log_densities.size() != counts.size() || counts.empty()) {
    throw InputError("mixture row and counts must be non-empty and of equal length");
  }
  double peak = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (!(counts[k] > 0.0)) throw InputError("mixture counts must be positive");
    peak = std::max(peak, log_densities[k]);
    total += counts[k];
  }
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    sum += counts[k] * std::exp(log_densities[k] - peak);
  }
  return peak + std::log(sum / total);
}

}  // namespace nfanneal

#endif  // NFANNEAL_WEIGHTS_HPP
