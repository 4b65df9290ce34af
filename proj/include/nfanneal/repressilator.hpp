#ifndef NFANNEAL_REPRESSILATOR_HPP
#define NFANNEAL_REPRESSILATOR_HPP

// The repressilator ODE model, its Gaussian-noise likelihood and Gaussian prior,
// and synthetic data generation.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nfanneal/errors.hpp"
#include "nfanneal/ode.hpp"
#include "nfanneal/random.hpp"
#include "nfanneal/target.hpp"

namespace nfanneal {

/// theta = (X1(0), X2(0), X3(0), alpha1, alpha2, alpha3, m, eta).
struct RepressilatorParams {
  static constexpr std::size_t kDim = 8;
  std::array<double, kDim> values{};

  RepressilatorParams() = default;
  explicit RepressilatorParams(const std::array<double, kDim>& v) : values(v) {}
  explicit RepressilatorParams(std::span<const double> v) {
    if (v.size() != kDim) throw InputError("repressilator parameters have dimension 8");
    std::copy(v.begin(), v.end(), values.begin());
  }

  double initial(std::size_t i) const { return values[i]; }
  double production(std::size_t i) const { return values[3 + i]; }
  double hill() const { return values[6]; }
  double degradation() const { return values[7]; }

  /// (X1, X2, X3; a1, a2, a3) -> (X2, X3, X1; a2, a3, a1). The observable
  /// X1 + X2 + X3 is blind to this relabeling.
  RepressilatorParams cyclic_shift() const {
    auto v = values;
    v[0] = values[1];
    v[1] = values[2];
    v[2] = values[0];
    v[3] = values[4];
    v[4] = values[5];
    v[5] = values[3];
    return RepressilatorParams(v);
  }

  /// Parameters used to generate the canonical dataset.
  static RepressilatorParams canonical() {
    return RepressilatorParams({2.0, 2.0, 2.0, 10.0, 15.0, 20.0, 4.0, 1.0});
  }
};

using RepressilatorState = std::array<double, 3>;

/// dX_i/dt = alpha_i / (1 + X_{p(i)}^m) - eta X_i with p(1)=2, p(2)=3, p(3)=1.
inline RepressilatorState repressilator_rhs(const RepressilatorState& x,
                                            const RepressilatorParams& theta) {
  RepressilatorState dx;
  for (std::size_t i = 0; i < 3; ++i) {
    const double repressor = x[(i + 1) % 3];
    dx[i] = theta.production(i) / (1.0 + std::pow(repressor, theta.hill())) -
            theta.degradation() * x[i];
  }
  return dx;
}

struct Dataset {
  std::vector<double> times;
  std::vector<double> observed;
  double noise_variance = 0.25;
  std::optional<RepressilatorParams> theta_true;
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (times.size() != observed.size() || times.empty()) {
      throw InputError("dataset needs matching, non-empty time and value columns");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw InputError("dataset times must be strictly increasing");
    }
    if (!(noise_variance > 0.0)) throw InputError("noise variance must be positive");
  }
};

/// t = 0, 0.6, ..., 30 (51 points).
inline std::vector<double> canonical_times(double t_end = 30.0, double interval = 0.6) {
  std::vector<double> t;
  const auto count = static_cast<std::size_t>(std::llround(t_end / interval));
  for (std::size_t i = 0; i <= count; ++i) t.push_back(static_cast<double>(i) * interval);
  return t;
}

/// Integrates the repressilator from t = 0 and returns the states at `times`.
inline OdeSolution<3> simulate_repressilator(const RepressilatorParams& theta,
                                             std::span<const double> times,
                                             const OdeOptions& options = {}) {
  const RepressilatorState x0{theta.initial(0), theta.initial(1), theta.initial(2)};
  auto rhs = [&theta](double, const RepressilatorState& x) { return repressilator_rhs(x, theta); };
  return tsit5_integrate<3>(rhs, x0, 0.0, times.back(), times, options);
}

/// Posterior over theta: Gaussian prior, Gaussian measurement noise on
/// X1 + X2 + X3, and a fill value replacing the prediction when the solver fails.
class RepressilatorPosterior final : public AnnealedTarget {
 public:
  static constexpr double kFailureFill = 200.0;

  explicit RepressilatorPosterior(Dataset data, OdeOptions solver = {})
      : data_(std::move(data)), solver_(solver) {
    data_.validate();
    if (data_.times.front() < 0.0) throw InputError("observation times must be nonnegative");
    prior_mean_ = {2.0, 2.0, 2.0, 15.0, 15.0, 15.0, 5.0, 5.0};
    prior_var_ = {4.0, 4.0, 4.0, 25.0, 25.0, 25.0, 25.0, 25.0};
    double log_det = 0.0;
    for (double v : prior_var_) log_det += std::log(v);
    prior_norm_ = -0.5 * (8.0 * std::log(2.0 * std::numbers::pi) + log_det);
  }

  std::size_t dim() const override { return RepressilatorParams::kDim; }
  std::string name() const override { return "repressilator"; }

  double log_prior(std::span<const double> theta) const {
    if (theta.size() != 8) throw InputError("repressilator parameters have dimension 8");
    double q = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double d = theta[i] - prior_mean_[i];
      q += d * d / prior_var_[i];
    }
    return prior_norm_ - 0.5 * q;
  }

  /// Model predictions of X1 + X2 + X3 at the observation times, or nothing
  /// if the solver fails.
  std::optional<std::vector<double>> predict(const RepressilatorParams& theta) const {
    const auto sol = simulate_repressilator(theta, data_.times, solver_);
    if (!sol.ok()) return std::nullopt;
    std::vector<double> out(sol.states.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
      out[t] = sol.states[t][0] + sol.states[t][1] + sol.states[t][2];
      if (!std::isfinite(out[t])) return std::nullopt;
    }
    return out;
  }

  double log_likelihood(std::span<const double> theta) const {
    const RepressilatorParams params(theta);
    const auto pred = predict(params);
    const double s2 = data_.noise_variance;
    const double per_point = -0.5 * std::log(2.0 * std::numbers::pi * s2);
    double sum = 0.0;
    for (std::size_t t = 0; t < data_.observed.size(); ++t) {
      const double r = data_.observed[t] - (pred ? (*pred)[t] : kFailureFill);
      sum += per_point - r * r / (2.0 * s2);
    }
    if (!std::isfinite(sum)) {
      // Finite but enormous predictions overflow the square; treat as failure.
      sum = 0.0;
      for (std::size_t t = 0; t < data_.observed.size(); ++t) {
        const double r = data_.observed[t] - kFailureFill;
        sum += per_point - r * r / (2.0 * s2);
      }
    }
    return sum;
  }

  TargetTerms terms(std::span<const double> x) const override {
    return {log_prior(x), log_likelihood(x)};
  }

  void sample_base(Rng& rng, std::span<double> out) const override {
    for (std::size_t i = 0; i < 8; ++i) out[i] = prior_mean_[i] + std::sqrt(prior_var_[i]) * rng.normal();
  }

  const Dataset& data() const { return data_; }
  const OdeOptions& solver() const { return solver_; }
  const std::array<double, 8>& prior_mean() const { return prior_mean_; }
  const std::array<double, 8>& prior_variance() const { return prior_var_; }

 private:
  Dataset data_;
  OdeOptions solver_;
  std::array<double, 8> prior_mean_{};
  std::array<double, 8> prior_var_{};
  double prior_norm_ = 0.0;
};

struct SimulatedData {
  Dataset dataset;
  std::vector<RepressilatorState> noiseless_states;
  std::vector<double> noiseless_total;
};

/// Integrates theta_true over `times` and adds i.i.d. N(0, noise_variance) noise
/// to X1 + X2 + X3. Throws if the solver fails at theta_true.
inline SimulatedData generate_data(const RepressilatorParams& theta_true, double noise_variance,
                                   std::uint64_t seed,
                                   const std::vector<double>& times = canonical_times(),
                                   const OdeOptions& solver = {}) {
  if (!(noise_variance >= 0.0)) throw InputError("noise variance must be nonnegative");
  const auto sol = simulate_repressilator(theta_true, times, solver);
  if (!sol.ok()) throw InputError("ODE solver failed at the data-generating parameters");
  SimulatedData out;
  out.dataset.times = times;
  out.dataset.noise_variance = noise_variance;
  out.dataset.theta_true = theta_true;
  out.dataset.seed = seed;
  out.noiseless_states = sol.states;
  Rng rng(seed);
  const double sd = std::sqrt(noise_variance);
  for (const auto& s : sol.states) {
    const double total = s[0] + s[1] + s[2];
    out.noiseless_total.push_back(total);
    out.dataset.observed.push_back(total + sd * rng.normal());
  }
  return out;
}

}  // namespace nfanneal

#endif  // NFANNEAL_REPRESSILATOR_HPP
