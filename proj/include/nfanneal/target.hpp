#ifndef NFANNEAL_TARGET_HPP
#define NFANNEAL_TARGET_HPP

// Annealed Bayesian targets p_b(x) p_u(x)^beta: the interface, evaluation over
// batches, and the analytic toy targets used for validation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"
#include "nfanneal/random.hpp"
#include "nfanneal/weights.hpp"

namespace nfanneal {

/// Cached per-sample components: log prior (base) and log likelihood (update).
struct TargetTerms {
  double log_base = 0.0;
  double log_update = 0.0;
};

class AnnealedTarget {
 public:
  virtual ~AnnealedTarget() = default;

  virtual std::size_t dim() const = 0;
  virtual TargetTerms terms(std::span<const double> x) const = 0;
  /// One draw from the normalized base distribution.
  virtual void sample_base(Rng& rng, std::span<double> out) const = 0;
  virtual std::string name() const = 0;
};

struct AnnealedValue {
  double log_target = 0.0;
  TargetTerms terms;
};

/// log p_b(x) + beta * log p_u(x), together with both components.
inline AnnealedValue annealed_log_target(const AnnealedTarget& target, std::span<const double> x,
                                         double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must lie in [0, 1]");
  const auto t = target.terms(x);
  return {t.log_base + beta * t.log_update, t};
}

struct BatchTerms {
  Eigen::VectorXd log_base;
  Eigen::VectorXd log_update;
};

/// Evaluates the target on every column of x using up to `threads` workers.
/// Results are stored by column index, so they do not depend on the worker count.
inline BatchTerms evaluate_batch(const AnnealedTarget& target, const Eigen::MatrixXd& x,
                                 std::size_t threads = 1) {
  const auto n = static_cast<std::size_t>(x.cols());
  BatchTerms out{Eigen::VectorXd(x.cols()), Eigen::VectorXd(x.cols())};
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto col = x.col(static_cast<Eigen::Index>(i));
      const auto t = target.terms(std::span<const double>(col.data(), col.size()));
      out.log_base[static_cast<Eigen::Index>(i)] = t.log_base;
      out.log_update[static_cast<Eigen::Index>(i)] = t.log_update;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    work(0, n);
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    pool.emplace_back(work, begin, std::min(n, begin + chunk));
  }
  return out;
}

inline std::size_t default_thread_count() {
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline double isotropic_gaussian_log_density(std::span<const double> x,
                                             std::span<const double> mean, double variance) {
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mean[i]) * (x[i] - mean[i]);
  return -0.5 * sq / variance -
         0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi * variance);
}

}  // namespace detail

/// Prior N(0, I) with Gaussian likelihood N(x; mu0, sigma0^2 I). Everything is
/// available in closed form.
class ConjugateGaussianTarget final : public AnnealedTarget {
 public:
  ConjugateGaussianTarget(std::vector<double> likelihood_mean, double likelihood_variance)
      : mean_(std::move(likelihood_mean)), variance_(likelihood_variance) {
    if (mean_.empty()) throw InputError("conjugate target needs a non-empty mean");
    if (!(variance_ > 0.0)) throw InputError("likelihood variance must be positive");
  }

  std::size_t dim() const override { return mean_.size(); }
  std::string name() const override { return "conjugate_gaussian"; }

  TargetTerms terms(std::span<const double> x) const override {
    const std::vector<double> zero(mean_.size(), 0.0);
    return {detail::isotropic_gaussian_log_density(x, zero, 1.0),
            detail::isotropic_gaussian_log_density(x, mean_, variance_)};
  }

  void sample_base(Rng& rng, std::span<double> out) const override {
    for (double& v : out) v = rng.normal();
  }

  /// Posterior at temperature beta is N(m_beta, s_beta^2 I).
  double posterior_variance(double beta = 1.0) const { return 1.0 / (1.0 + beta / variance_); }
  std::vector<double> posterior_mean(double beta = 1.0) const {
    std::vector<double> m(mean_);
    for (double& v : m) v *= posterior_variance(beta) * beta / variance_;
    return m;
  }

  /// log of the integral of N(x; 0, I) N(mu0; x, sigma0^2 I) dx.
  double log_evidence() const {
    const std::vector<double> zero(mean_.size(), 0.0);
    return detail::isotropic_gaussian_log_density(mean_, zero, 1.0 + variance_);
  }

  /// E[log p_u] under the beta-tempered posterior.
  double expected_log_update(double beta) const {
    const double s2 = posterior_variance(beta);
    const auto m = posterior_mean(beta);
    double sq = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) sq += (m[i] - mean_[i]) * (m[i] - mean_[i]);
    const double d = static_cast<double>(mean_.size());
    return -0.5 * (sq + d * s2) / variance_ -
           0.5 * d * std::log(2.0 * std::numbers::pi * variance_);
  }

  const std::vector<double>& likelihood_mean() const { return mean_; }
  double likelihood_variance() const { return variance_; }

 private:
  std::vector<double> mean_;
  double variance_;
};

/// Broad isotropic Gaussian prior with an equal-weight mixture of three
/// isotropic Gaussians as the likelihood, centred on a circle at 90, 210 and
/// 330 degrees. The posterior has three symmetric modes.
class TrimodalTarget final : public AnnealedTarget {
 public:
  TrimodalTarget(double radius, double mode_std, double prior_std)
      : radius_(radius), mode_var_(mode_std * mode_std), prior_var_(prior_std * prior_std) {
    if (!(radius > 0.0 && mode_std > 0.0 && prior_std > 0.0)) {
      throw InputError("trimodal target parameters must be positive");
    }
    for (int k = 0; k < 3; ++k) {
      const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * k / 3.0;
      centers_[k] = {radius * std::cos(angle), radius * std::sin(angle)};
    }
  }

  std::size_t dim() const override { return 2; }
  std::string name() const override { return "trimodal"; }

  TargetTerms terms(std::span<const double> x) const override {
    const std::array<double, 2> zero{0.0, 0.0};
    std::array<double, 3> comp;
    for (int k = 0; k < 3; ++k) {
      comp[k] = detail::isotropic_gaussian_log_density(x, centers_[k], mode_var_);
    }
    return {detail::isotropic_gaussian_log_density(x, zero, prior_var_),
            log_sum_exp(comp) - std::log(3.0)};
  }

  void sample_base(Rng& rng, std::span<double> out) const override {
    for (double& v : out) v = std::sqrt(prior_var_) * rng.normal();
  }

  const std::array<std::array<double, 2>, 3>& centers() const { return centers_; }

  /// Index of the nearest likelihood centre.
  std::size_t nearest_mode(std::span<const double> x) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = std::hypot(x[0] - centers_[k][0], x[1] - centers_[k][1]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  }

 private:
  double radius_;
  double mode_var_;
  double prior_var_;
  std::array<std::array<double, 2>, 3> centers_;
};

}  // namespace nfanneal

#endif  // NFANNEAL_TARGET_HPP
