#ifndef NFANNEAL_ODE_HPP
#define NFANNEAL_ODE_HPP

// Tsitouras 5(4) explicit Runge-Kutta integrator with embedded error estimate
// and its free fourth-order interpolant for output at requested times.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "nfanneal/errors.hpp"

namespace nfanneal {

namespace tsit5 {

inline constexpr std::array<double, 7> c = {0.0,
                                            0.161,
                                            0.327,
                                            0.9,
                                            0.9800255409045097,
                                            1.0,
                                            1.0};

// Row i holds a_{i+1, 1..i}; the last row doubles as the fifth-order weights.
inline constexpr double a21 = 0.161;
inline constexpr double a31 = -0.008480655492356989;
inline constexpr double a32 = 0.335480655492357;
inline constexpr double a41 = 2.897153057105493;
inline constexpr double a42 = -6.359448489975075;
inline constexpr double a43 = 4.3622954328695815;
inline constexpr double a51 = 5.325864828439257;
inline constexpr double a52 = -11.748883564062828;
inline constexpr double a53 = 7.4955393428898365;
inline constexpr double a54 = -0.09249506636175525;
inline constexpr double a61 = 5.86145544294642;
inline constexpr double a62 = -12.92096931784711;
inline constexpr double a63 = 8.159367898576159;
inline constexpr double a64 = -0.071584973281401;
inline constexpr double a65 = -0.028269050394068383;
inline constexpr double a71 = 0.09646076681806523;
inline constexpr double a72 = 0.01;
inline constexpr double a73 = 0.4798896504144996;
inline constexpr double a74 = 1.379008574103742;
inline constexpr double a75 = -3.290069515436081;
inline constexpr double a76 = 2.324710524099774;

inline constexpr std::array<double, 7> b = {a71, a72, a73, a74, a75, a76, 0.0};

// Fifth-order minus embedded fourth-order weights.
inline constexpr std::array<double, 7> btilde = {-0.00178001105222577714,
                                                 -0.0008164344596567469,
                                                 0.007880878010261995,
                                                 -0.1447110071732629,
                                                 0.5823571654525552,
                                                 -0.45808210592918697,
                                                 1.0 / 66.0};

/// Interpolant weights b_i(theta) for theta in [0, 1]; b_i(1) = b_i.
inline std::array<double, 7> dense_weights(double th) {
  const double t2 = th * th, t3 = t2 * th, t4 = t3 * th;
  return {th - 2.763706197274826 * t2 + 2.9132554618219126 * t3 - 1.0530884977290216 * t4,
          0.13169999999999998 * t2 - 0.2234 * t3 + 0.1017 * t4,
          3.9302962368947516 * t2 - 5.941033872131505 * t3 + 2.490627285651253 * t4,
          -12.411077166933676 * t2 + 30.33818863028232 * t3 - 16.548102889244902 * t4,
          37.50931341651104 * t2 - 88.1789048947664 * t3 + 47.37952196281928 * t4,
          -27.896526289197286 * t2 + 65.09189467479366 * t3 - 34.87065786149661 * t4,
          1.5 * t2 - 4.0 * t3 + 2.5 * t4};
}

}  // namespace tsit5

struct OdeOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  std::size_t max_steps = 1'000'000;
  /// Steps shorter than this fraction of the integration span count as underflow.
  double min_step_fraction = 1e-14;
  /// Disables adaptivity and integrates with this constant step when set.
  std::optional<double> fixed_step;
};

enum class OdeStatus { kSuccess, kStepUnderflow, kMaxSteps, kNonFinite };

template <std::size_t N>
struct OdeSolution {
  using State = std::array<double, N>;
  OdeStatus status = OdeStatus::kSuccess;
  std::vector<State> states;  // one per requested save time, on success
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::size_t rhs_evaluations = 0;

  bool ok() const noexcept { return status == OdeStatus::kSuccess; }
};

namespace detail {

template <std::size_t N>
bool all_finite(const std::array<double, N>& x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detail

/// Integrates dx/dt = rhs(t, x) from t0 to t1 and returns the state at each
/// time in save_at (increasing, inside [t0, t1]). Solver failures are reported
/// through the status field rather than thrown.
template <std::size_t N, class Rhs>
OdeSolution<N> tsit5_integrate(Rhs&& rhs, const std::array<double, N>& x0, double t0, double t1,
                               std::span<const double> save_at, const OdeOptions& options = {}) {
  using State = std::array<double, N>;
  if (!(t1 > t0)) throw InputError("integration requires t1 > t0");
  for (std::size_t i = 0; i < save_at.size(); ++i) {
    if (save_at[i] < t0 || save_at[i] > t1 || (i > 0 && !(save_at[i] > save_at[i - 1]))) {
      throw InputError("save times must be strictly increasing within [t0, t1]");
    }
  }

  OdeSolution<N> sol;
  sol.states.reserve(save_at.size());
  std::size_t next_save = 0;
  while (next_save < save_at.size() && save_at[next_save] == t0) {
    sol.states.push_back(x0);
    ++next_save;
  }

  auto eval = [&](double t, const State& x) {
    ++sol.rhs_evaluations;
    return rhs(t, x);
  };
  auto fail = [&](OdeStatus status) {
    sol.status = status;
    sol.states.clear();
    return sol;
  };

  const double span = t1 - t0;
  State x = x0;
  if (!detail::all_finite(x)) return fail(OdeStatus::kNonFinite);
  State k1 = eval(t0, x);
  if (!detail::all_finite(k1)) return fail(OdeStatus::kNonFinite);

  auto scaled_norm = [&](const State& v, const State& ref_a, const State& ref_b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double sc =
          options.atol + options.rtol * std::max(std::abs(ref_a[i]), std::abs(ref_b[i]));
      acc += (v[i] / sc) * (v[i] / sc);
    }
    return std::sqrt(acc / static_cast<double>(N));
  };

  double h;
  if (options.fixed_step) {
    h = *options.fixed_step;
  } else {
    // Hairer-Wanner starting step heuristic.
    const double d0 = scaled_norm(x, x, x);
    const double d1 = scaled_norm(k1, x, x);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    State x1;
    for (std::size_t i = 0; i < N; ++i) x1[i] = x[i] + h0 * k1[i];
    const State f1 = eval(t0 + h0, x1);
    State df;
    for (std::size_t i = 0; i < N; ++i) df[i] = f1[i] - k1[i];
    const double d2 = detail::all_finite(f1) ? scaled_norm(df, x, x) / h0
                                             : std::numeric_limits<double>::infinity();
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    h = std::min(100.0 * h0, h1);
  }

  double t = t0;
  bool last_rejected = false;
  std::array<State, 7> k;
  while (t < t1) {
    if (sol.accepted_steps + sol.rejected_steps >= options.max_steps) {
      return fail(OdeStatus::kMaxSteps);
    }
    if (!options.fixed_step && h < options.min_step_fraction * span) {
      return fail(OdeStatus::kStepUnderflow);
    }
    const bool final_step = t + h >= t1;
    if (final_step) h = t1 - t;

    using namespace tsit5;
    k[0] = k1;
    State tmp;
    auto stage = [&](std::size_t s, std::initializer_list<double> coeffs) {
      for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        std::size_t j = 0;
        for (double a : coeffs) acc += a * k[j++][i];
        tmp[i] = x[i] + h * acc;
      }
      k[s] = eval(t + c[s] * h, tmp);
    };
    stage(1, {a21});
    stage(2, {a31, a32});
    stage(3, {a41, a42, a43});
    stage(4, {a51, a52, a53, a54});
    stage(5, {a61, a62, a63, a64, a65});
    State x_new;
    for (std::size_t i = 0; i < N; ++i) {
      x_new[i] = x[i] + h * (a71 * k[0][i] + a72 * k[1][i] + a73 * k[2][i] + a74 * k[3][i] +
                             a75 * k[4][i] + a76 * k[5][i]);
    }
    const double t_new = final_step ? t1 : t + h;
    k[6] = eval(t_new, x_new);

    const bool finite = detail::all_finite(x_new) && detail::all_finite(k[6]);
    double err_norm = 0.0;
    if (finite) {
      State err;
      for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 7; ++j) acc += btilde[j] * k[j][i];
        err[i] = h * acc;
      }
      err_norm = scaled_norm(err, x, x_new);
    }

    if (options.fixed_step) {
      if (!finite) return fail(OdeStatus::kNonFinite);
      err_norm = 0.0;
    }

    if (finite && err_norm <= 1.0) {
      while (next_save < save_at.size() && save_at[next_save] <= t_new) {
        const double th = (save_at[next_save] - t) / h;
        const auto bw = dense_weights(th);
        State out;
        for (std::size_t i = 0; i < N; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < 7; ++j) acc += bw[j] * k[j][i];
          out[i] = x[i] + h * acc;
        }
        if (save_at[next_save] == t_new) out = x_new;
        sol.states.push_back(out);
        ++next_save;
      }
      t = t_new;
      x = x_new;
      k1 = k[6];
      ++sol.accepted_steps;
      if (!options.fixed_step) {
        double factor = err_norm == 0.0 ? 10.0 : 0.9 * std::pow(err_norm, -0.2);
        factor = std::clamp(factor, 0.2, last_rejected ? 1.0 : 10.0);
        h *= factor;
      }
      last_rejected = false;
    } else {
      ++sol.rejected_steps;
      const double factor = finite ? std::max(0.2, 0.9 * std::pow(err_norm, -0.2)) : 0.25;
      h *= factor;
      last_rejected = true;
    }
  }
  return sol;
}

}  // namespace nfanneal

#endif  // NFANNEAL_ODE_HPP
