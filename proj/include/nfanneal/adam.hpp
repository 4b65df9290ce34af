#ifndef NFANNEAL_ADAM_HPP
#define NFANNEAL_ADAM_HPP

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"

namespace nfanneal {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double clip_norm = 1e6;  // global gradient norm bound
};

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;
};

/// Rescales grads in place so their joint L2 norm is at most clip_norm.
/// Returns the norm before clipping.
inline double clip_gradient_norm(Eigen::VectorXd& grads, double clip_norm) {
  const double norm = grads.norm();
  if (norm > clip_norm) grads *= clip_norm / norm;
  return norm;
}

/// Bias-corrected Adam update after global-norm clipping.
inline void adam_step(Eigen::VectorXd& params, Eigen::VectorXd grads, AdamState& state,
                      const AdamConfig& config) {
  if (grads.size() != params.size()) throw InputError("gradient and parameter sizes differ");
  if (!grads.allFinite()) throw TrainingDivergedError("non-finite gradient");
  if (state.first_moment.size() != params.size()) {
    state.first_moment = Eigen::VectorXd::Zero(params.size());
    state.second_moment = Eigen::VectorXd::Zero(params.size());
    state.step = 0;
  }
  clip_gradient_norm(grads, config.clip_norm);

  ++state.step;
  state.first_moment = config.beta1 * state.first_moment + (1.0 - config.beta1) * grads;
  state.second_moment =
      config.beta2 * state.second_moment + (1.0 - config.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + config.epsilon);
}

}  // namespace nfanneal

#endif  // NFANNEAL_ADAM_HPP
