#ifndef NFANNEAL_SCHEDULE_HPP
#define NFANNEAL_SCHEDULE_HPP

#include <cmath>
#include <cstddef>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"
#include "nfanneal/weights.hpp"

namespace nfanneal {

/// n_eff(beta) for samples with cached log p_b, log p_u and proposal log q.
inline double ess_at_beta(const Eigen::VectorXd& log_base, const Eigen::VectorXd& log_update,
                          const Eigen::VectorXd& log_q, double beta) {
  const Eigen::VectorXd lw = log_base + beta * log_update - log_q;
  return ess_from_log_weights(lw);
}

struct BetaSolveOptions {
  double tolerance = 1e-8;
  /// Log-spaced probes of the increment beta - beta_s used to find the first crossing.
  std::size_t scan_points = 241;
  double smallest_increment_fraction = 1e-12;
  /// n_eff(beta_s) at or below 1 + this is degenerate.
  double degenerate_margin = 1e-9;
};

/// Smallest beta' in (beta_s, 1] with n_eff(beta') = gamma n_eff(beta_s).
///
/// The increment is scanned on a log grid from 1e-12 (1 - beta_s) up to
/// 1 - beta_s; the first interval where n_eff drops below the target is then
/// bisected. If n_eff never drops below the target the result is 1.
inline double solve_beta(const Eigen::VectorXd& log_base, const Eigen::VectorXd& log_update,
                         const Eigen::VectorXd& log_q, double beta_s, double gamma,
                         const BetaSolveOptions& options = {}) {
  if (!(beta_s >= 0.0 && beta_s < 1.0)) throw InputError("beta_s must lie in [0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InputError("gamma must lie in (0, 1]");
  if (log_base.size() != log_update.size() || log_base.size() != log_q.size() ||
      log_base.size() == 0) {
    throw InputError("solve_beta needs matching, non-empty sample caches");
  }
  const double n_current = ess_at_beta(log_base, log_update, log_q, beta_s);
  if (!(n_current > 1.0 + options.degenerate_margin)) {
    throw ScheduleStallError("effective sample size at the current beta is degenerate (" +
                             std::to_string(n_current) + ")");
  }
  const double target = gamma * n_current;
  auto below = [&](double beta) { return ess_at_beta(log_base, log_update, log_q, beta) < target; };

  const double room = 1.0 - beta_s;
  double lo = beta_s;
  double hi = -1.0;
  const double log_min = std::log10(options.smallest_increment_fraction);
  for (std::size_t j = 0; j < options.scan_points; ++j) {
    const double frac =
        j + 1 == options.scan_points
            ? 1.0
            : std::pow(10.0, log_min * (1.0 - static_cast<double>(j) /
                                                  static_cast<double>(options.scan_points - 1)));
    const double beta = j + 1 == options.scan_points ? 1.0 : beta_s + room * frac;
    if (below(beta)) {
      hi = beta;
      break;
    }
    lo = beta;
  }
  if (hi < 0.0) return 1.0;

  for (int iter = 0; iter < 200; ++iter) {
    const double width = hi - lo;
    if (width <= options.tolerance && width <= 1e-6 * (hi - beta_s)) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (below(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace nfanneal

#endif  // NFANNEAL_SCHEDULE_HPP
