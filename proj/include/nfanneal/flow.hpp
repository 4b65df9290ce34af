#ifndef NFANNEAL_FLOW_HPP
#define NFANNEAL_FLOW_HPP

// RealNVP normalizing flow: affine coupling layers with MLP conditioners, exact
// log-density through the change of variables, sampling, and the exact gradient
// of the importance-weighted forward-KL loss.
//
// Batches are column-major: a Batch of shape (dim, n) holds one sample per
// column. The flow maps latent z ~ N(0, I) to x; log_prob runs the inverse.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"
#include "nfanneal/random.hpp"

namespace nfanneal {

using Batch = Eigen::MatrixXd;

/// Scale outputs pass through bound * tanh(raw / bound) before exponentiation.
inline constexpr double kScaleBound = 8.0;

/// Which half of the coordinates a coupling layer leaves unchanged.
enum class MaskParity : std::uint8_t { kPassFirst = 0, kPassSecond = 1 };

namespace detail {

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * (std::numbers::sqrt2 / 2.0)));
}

/// GELU and its derivative sharing one erf evaluation.
inline void gelu_with_slope(const Eigen::MatrixXd& pre, Eigen::MatrixXd& act, Eigen::MatrixXd& slope) {
  act.resize(pre.rows(), pre.cols());
  slope.resize(pre.rows(), pre.cols());
  constexpr double kPdfScale = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    const double x = pre.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * (std::numbers::sqrt2 / 2.0)));
    act.data()[i] = x * cdf;
    slope.data()[i] = cdf + x * std::exp(-0.5 * x * x) * kPdfScale;
  }
}

inline Eigen::VectorXd standard_normal_log_density(const Batch& z) {
  const double norm = 0.5 * static_cast<double>(z.rows()) * std::log(2.0 * std::numbers::pi);
  return (-0.5 * z.colwise().squaredNorm().array() - norm).matrix().transpose();
}

}  // namespace detail

/// Fully connected network io -> 3io -> 3io -> 3io -> io with GELU hidden
/// activations and a linear output. Parameters live in the owning flow's flat
/// parameter vector starting at offset(); each dense layer stores its weight
/// matrix (column-major, out x in) followed by its bias.
class MlpConditioner {
 public:
  static constexpr std::size_t kHiddenLayers = 3;
  static constexpr std::size_t kWidthFactor = 3;
  static constexpr std::size_t kDenseLayers = kHiddenLayers + 1;

  struct Tape {
    Eigen::MatrixXd input;
    std::array<Eigen::MatrixXd, kHiddenLayers> slope;  // GELU derivative at each pre-activation
    std::array<Eigen::MatrixXd, kHiddenLayers> act;
  };

  MlpConditioner() = default;
  MlpConditioner(std::size_t io_dim, std::size_t offset)
      : io_dim_(io_dim), hidden_(kWidthFactor * io_dim), offset_(offset) {}

  std::size_t io_dim() const noexcept { return io_dim_; }
  std::size_t hidden_width() const noexcept { return hidden_; }
  std::size_t offset() const noexcept { return offset_; }

  std::size_t parameter_count() const noexcept {
    std::size_t total = 0;
    for (std::size_t i = 0; i < kDenseLayers; ++i) total += out_dim(i) * (in_dim(i) + 1);
    return total;
  }

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& params, const Eigen::MatrixXd& input,
                           Tape* tape = nullptr) const {
    Eigen::MatrixXd h = input;
    if (tape) tape->input = input;
    for (std::size_t i = 0; i < kDenseLayers; ++i) {
      Eigen::MatrixXd pre = weight(params, i) * h;
      pre.colwise() += bias(params, i);
      if (i + 1 == kDenseLayers) return pre;
      if (tape) {
        detail::gelu_with_slope(pre, tape->act[i], tape->slope[i]);
        h = tape->act[i];
      } else {
        h = pre.unaryExpr(&detail::gelu);
      }
    }
    return h;
  }

  /// Backpropagates grad_output through the network recorded in tape.
  /// Parameter gradients are accumulated into grad_params; returns the
  /// gradient with respect to the input.
  Eigen::MatrixXd backward(const Eigen::VectorXd& params, const Tape& tape,
                           const Eigen::MatrixXd& grad_output,
                           Eigen::VectorXd& grad_params) const {
    Eigen::MatrixXd g = grad_output;
    for (std::size_t k = kDenseLayers; k-- > 0;) {
      const Eigen::MatrixXd& layer_input = k == 0 ? tape.input : tape.act[k - 1];
      Eigen::Map<Eigen::MatrixXd> grad_w(grad_params.data() + weight_offset(k), out_dim(k),
                                         in_dim(k));
      Eigen::Map<Eigen::VectorXd> grad_b(grad_params.data() + bias_offset(k), out_dim(k));
      grad_w.noalias() += g * layer_input.transpose();
      grad_b += g.rowwise().sum();
      Eigen::MatrixXd g_in = weight(params, k).transpose() * g;
      if (k > 0) {
        g = g_in.cwiseProduct(tape.slope[k - 1]);
      } else {
        g = std::move(g_in);
      }
    }
    return g;
  }

  /// Glorot-uniform hidden layers; the output layer starts at zero so the
  /// conditioner initially emits zeros.
  void initialize(Eigen::VectorXd& params, Rng& rng) const {
    for (std::size_t i = 0; i < kDenseLayers; ++i) {
      const std::size_t n_w = out_dim(i) * in_dim(i);
      const double limit =
          i + 1 == kDenseLayers ? 0.0 : std::sqrt(6.0 / static_cast<double>(in_dim(i) + out_dim(i)));
      for (std::size_t j = 0; j < n_w; ++j) {
        params[weight_offset(i) + j] = limit * (2.0 * rng.uniform() - 1.0);
      }
      params.segment(bias_offset(i), out_dim(i)).setZero();
    }
  }

  std::size_t in_dim(std::size_t layer) const noexcept { return layer == 0 ? io_dim_ : hidden_; }
  std::size_t out_dim(std::size_t layer) const noexcept {
    return layer + 1 == kDenseLayers ? io_dim_ : hidden_;
  }

  std::size_t weight_offset(std::size_t layer) const noexcept {
    std::size_t off = offset_;
    for (std::size_t i = 0; i < layer; ++i) off += out_dim(i) * (in_dim(i) + 1);
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const noexcept {
    return weight_offset(layer) + out_dim(layer) * in_dim(layer);
  }

  Eigen::Map<const Eigen::MatrixXd> weight(const Eigen::VectorXd& params, std::size_t layer) const {
    return {params.data() + weight_offset(layer), static_cast<Eigen::Index>(out_dim(layer)),
            static_cast<Eigen::Index>(in_dim(layer))};
  }
  Eigen::Map<const Eigen::VectorXd> bias(const Eigen::VectorXd& params, std::size_t layer) const {
    return {params.data() + bias_offset(layer), static_cast<Eigen::Index>(out_dim(layer))};
  }

 private:
  std::size_t io_dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t offset_ = 0;
};

/// One affine coupling: the transformed half becomes x * exp(a(x_pass)) + b(x_pass).
struct CouplingLayer {
  MaskParity parity = MaskParity::kPassFirst;
  MlpConditioner scale;
  MlpConditioner shift;

  Eigen::Index half() const noexcept { return static_cast<Eigen::Index>(scale.io_dim()); }
  Eigen::Index pass_row() const noexcept { return parity == MaskParity::kPassFirst ? 0 : half(); }
  Eigen::Index transformed_row() const noexcept {
    return parity == MaskParity::kPassFirst ? half() : 0;
  }
};

/// Stack of coupling layers over a standard-normal base in dim() dimensions.
class FlowModel {
 public:
  FlowModel() = default;

  /// Identity flow with alternating masks: the first layer passes the first half.
  FlowModel(std::size_t dim, std::size_t num_layers)
      : FlowModel(dim, alternating_parities(num_layers)) {}

  FlowModel(std::size_t dim, const std::vector<MaskParity>& parities) : dim_(dim) {
    if (dim == 0 || dim % 2 != 0) throw InputError("flow dimension must be even and positive");
    if (parities.empty()) throw InputError("flow needs at least one coupling layer");
    const std::size_t half = dim / 2;
    std::size_t offset = 0;
    for (MaskParity parity : parities) {
      CouplingLayer layer;
      layer.parity = parity;
      layer.scale = MlpConditioner(half, offset);
      offset += layer.scale.parameter_count();
      layer.shift = MlpConditioner(half, offset);
      offset += layer.shift.parameter_count();
      layers_.push_back(layer);
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
  }

  /// Randomly initialized flow that is still the identity map.
  static FlowModel initialized(std::size_t dim, std::size_t num_layers, Rng& rng) {
    FlowModel model(dim, num_layers);
    for (const auto& layer : model.layers_) {
      layer.scale.initialize(model.params_, rng);
      layer.shift.initialize(model.params_, rng);
    }
    return model;
  }

  static std::vector<MaskParity> alternating_parities(std::size_t num_layers) {
    std::vector<MaskParity> out(num_layers);
    for (std::size_t i = 0; i < num_layers; ++i) {
      out[i] = i % 2 == 0 ? MaskParity::kPassFirst : MaskParity::kPassSecond;
    }
    return out;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }
  const std::vector<CouplingLayer>& layers() const noexcept { return layers_; }

  const Eigen::VectorXd& parameters() const noexcept { return params_; }
  Eigen::VectorXd& parameters() noexcept { return params_; }

 private:
  std::size_t dim_ = 0;
  std::vector<CouplingLayer> layers_;
  Eigen::VectorXd params_;
};

struct CouplingOutput {
  Batch y;
  Eigen::VectorXd log_det;  // log|det dy/dx| per column
};

namespace detail {

struct CouplingTerms {
  Eigen::MatrixXd raw_scale;
  Eigen::MatrixXd scale;  // bounded
  Eigen::MatrixXd shift;
};

inline CouplingTerms conditioner_terms(const CouplingLayer& layer, const Eigen::VectorXd& params,
                                       const Eigen::MatrixXd& pass, std::size_t layer_index,
                                       MlpConditioner::Tape* scale_tape = nullptr,
                                       MlpConditioner::Tape* shift_tape = nullptr) {
  CouplingTerms t;
  t.raw_scale = layer.scale.evaluate(params, pass, scale_tape);
  t.shift = layer.shift.evaluate(params, pass, shift_tape);
  if (!t.raw_scale.allFinite() || !t.shift.allFinite()) {
    throw NonFiniteError(layer_index, "conditioner produced a non-finite value");
  }
  t.scale = (t.raw_scale.array() / kScaleBound).tanh() * kScaleBound;
  return t;
}

inline void require_shape(const FlowModel& model, const Batch& x) {
  if (static_cast<std::size_t>(x.rows()) != model.dim()) {
    throw InputError("batch has " + std::to_string(x.rows()) + " rows, flow expects " +
                     std::to_string(model.dim()));
  }
}

}  // namespace detail

inline CouplingOutput coupling_forward(const CouplingLayer& layer, const Eigen::VectorXd& params,
                                       const Batch& x, std::size_t layer_index = 0) {
  const Eigen::Index v = layer.half();
  const auto terms =
      detail::conditioner_terms(layer, params, x.middleRows(layer.pass_row(), v), layer_index);
  CouplingOutput out{x, terms.scale.colwise().sum().transpose()};
  out.y.middleRows(layer.transformed_row(), v) =
      x.middleRows(layer.transformed_row(), v).cwiseProduct(terms.scale.array().exp().matrix()) +
      terms.shift;
  return out;
}

inline CouplingOutput coupling_inverse(const CouplingLayer& layer, const Eigen::VectorXd& params,
                                       const Batch& y, std::size_t layer_index = 0) {
  const Eigen::Index v = layer.half();
  const auto terms =
      detail::conditioner_terms(layer, params, y.middleRows(layer.pass_row(), v), layer_index);
  CouplingOutput out{y, -terms.scale.colwise().sum().transpose()};
  out.y.middleRows(layer.transformed_row(), v) =
      (y.middleRows(layer.transformed_row(), v) - terms.shift)
          .cwiseProduct((-terms.scale.array()).exp().matrix());
  return out;
}

struct FlowSample {
  Batch x;
  Eigen::VectorXd log_q;
};

/// x = f_L o ... o f_1(z) with log q(x) = log N(z) - sum of forward log-dets.
inline FlowSample flow_forward(const FlowModel& model, const Batch& z) {
  detail::require_shape(model, z);
  FlowSample out{z, detail::standard_normal_log_density(z)};
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto step = coupling_forward(layers[l], model.parameters(), out.x, l);
    out.x = std::move(step.y);
    out.log_q -= step.log_det;
  }
  return out;
}

struct InverseResult {
  Batch z;
  Eigen::VectorXd log_det;  // log|det dz/dx|
};

inline InverseResult flow_inverse(const FlowModel& model, const Batch& x) {
  detail::require_shape(model, x);
  InverseResult out{x, Eigen::VectorXd::Zero(x.cols())};
  const auto& layers = model.layers();
  for (std::size_t l = layers.size(); l-- > 0;) {
    auto step = coupling_inverse(layers[l], model.parameters(), out.z, l);
    out.z = std::move(step.y);
    out.log_det += step.log_det;
  }
  return out;
}

/// log q(x) for every column of x.
inline Eigen::VectorXd log_prob(const FlowModel& model, const Batch& x) {
  if (!x.allFinite()) throw InputError("log_prob requires finite input");
  auto inv = flow_inverse(model, x);
  return detail::standard_normal_log_density(inv.z) + inv.log_det;
}

inline double log_prob(const FlowModel& model, const Eigen::VectorXd& x) {
  return log_prob(model, Batch(x))[0];
}

/// n i.i.d. draws from the flow with their exact log-densities.
inline FlowSample sample(const FlowModel& model, std::size_t n, Rng& rng) {
  if (n == 0) throw InputError("sample count must be at least 1");
  Batch z(model.dim(), n);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rng.normal();
  }
  return flow_forward(model, z);
}

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// loss = -sum_i w_i log q(x_i) and its exact gradient with respect to every
/// conditioner parameter, by reverse-mode accumulation through the inverse pass.
/// Weights are used as given; the caller normalizes them.
inline LossGrad loss_and_grad(const FlowModel& model, const Batch& x,
                              const Eigen::VectorXd& weights) {
  detail::require_shape(model, x);
  if (weights.size() != x.cols()) throw InputError("one weight per sample is required");
  if ((weights.array() < 0.0).any() || !weights.allFinite()) {
    throw InputError("weights must be finite and nonnegative");
  }
  if (!(weights.sum() > 0.0)) throw DegenerateWeightsError("weights sum to zero");
  if (!x.allFinite()) throw InputError("loss_and_grad requires finite samples");

  struct LayerRecord {
    MlpConditioner::Tape scale_tape, shift_tape;
    Eigen::MatrixXd raw_scale, scale, transformed_out;
  };
  const auto& layers = model.layers();
  const auto& params = model.parameters();
  std::vector<LayerRecord> records(layers.size());

  Batch u = x;
  Eigen::VectorXd log_det = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const Eigen::Index v = layer.half();
    auto& rec = records[l];
    auto terms = detail::conditioner_terms(layer, params, u.middleRows(layer.pass_row(), v), l,
                                           &rec.scale_tape, &rec.shift_tape);
    auto t_rows = u.middleRows(layer.transformed_row(), v);
    t_rows = (t_rows - terms.shift).cwiseProduct((-terms.scale.array()).exp().matrix());
    log_det -= terms.scale.colwise().sum().transpose();
    rec.raw_scale = std::move(terms.raw_scale);
    rec.scale = std::move(terms.scale);
    rec.transformed_out = t_rows;
  }
  const Eigen::VectorXd log_q = detail::standard_normal_log_density(u) + log_det;

  LossGrad out;
  out.loss = -weights.dot(log_q);
  out.grad = Eigen::VectorXd::Zero(params.size());

  // d loss / d z = w_i z_i
  Eigen::MatrixXd g = u * weights.asDiagonal();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto& rec = records[l];
    const Eigen::Index v = layer.half();
    const Eigen::MatrixXd g_t = g.middleRows(layer.transformed_row(), v);
    const Eigen::ArrayXXd inv_exp = (-rec.scale.array()).exp();

    const Eigen::MatrixXd g_shift = -(g_t.array() * inv_exp).matrix();
    Eigen::MatrixXd g_scale = -(g_t.array() * rec.transformed_out.array()).matrix();
    g_scale.rowwise() += weights.transpose();
    const Eigen::ArrayXXd th = (rec.raw_scale.array() / kScaleBound).tanh();
    const Eigen::MatrixXd g_raw = (g_scale.array() * (1.0 - th.square())).matrix();

    Eigen::MatrixXd g_pass = g.middleRows(layer.pass_row(), v);
    g_pass += layer.scale.backward(params, rec.scale_tape, g_raw, out.grad);
    g_pass += layer.shift.backward(params, rec.shift_tape, g_shift, out.grad);

    g.middleRows(layer.transformed_row(), v) = (g_t.array() * inv_exp).matrix();
    g.middleRows(layer.pass_row(), v) = g_pass;
  }
  return out;
}

}  // namespace nfanneal

#endif  // NFANNEAL_FLOW_HPP
