#pragma once

// Lie derivatives of the closed-loop field X = g + h a and the order-2 truncated
// exponential map  e_t^X(s) ~ s + t L_X s + t^2/2 L_X^2 s.

#include "dynamics.hpp"
#include "policy.hpp"

#include <cmath>
#include <vector>

namespace attainable {

enum class PolicyMode { family, linearised };

/// Closed-loop vector field of a system under a two-layer policy in the chosen mode.
struct ClosedLoopField {
  const ControlAffineSystem* system;
  const TwoLayerParams* params;
  PolicyMode mode = PolicyMode::family;

  Vec action(const Vec& s) const {
    return mode == PolicyMode::family ? forward_family(*params, s) : forward_linearised(*params, s);
  }
  Mat action_jacobian(const Vec& s) const {
    return mode == PolicyMode::family ? policy_jacobian(*params, s) : linearised_jacobian(*params, s);
  }
  Vec operator()(const Vec& s) const {
    Vec ds = system->drift(s);
    ds.noalias() += system->control(s) * action(s);
    return ds;
  }
};

/// Adapts a field's policy to the StatePolicy interface for the integrators.
struct FieldPolicy {
  const ClosedLoopField* field;
  Vec operator()(const Vec& s) const { return field->action(s); }
};

struct LieExpansion {
  Vec order0;
  Vec order1;
  Vec order2;

  Vec evaluate(double t) const { return order0 + t * order1 + (0.5 * t * t) * order2; }
};

namespace detail {
inline void check_field(const ClosedLoopField& field, const Vec& s) {
  require_dims(field.system != nullptr && field.params != nullptr, "lie: field is not bound");
  require_dims(s.size() == field.system->state_dim, "lie: state dimension");
  require_dims(field.params->state_dim == field.system->state_dim &&
                   field.params->action_dim == field.system->action_dim,
               "lie: policy and system dimensions differ");
}
}  // namespace detail

/// L_X s = g(s) + h(s) a(s).
inline Vec lie_first(const ClosedLoopField& field, const Vec& s) {
  detail::check_field(field, s);
  return closed_loop_derivative(*field.system, FieldPolicy{&field}, s);
}

/// (L_X^2 s)_i = sum_k X_k d_k X_i, with
///   d_k X_i = d_k g_i + sum_j' (d_k h_{i,j'}) a_j' + h_{i,j'} d_k a_j'
/// which expands into drift-drift, control-drift, drift-control and control-control groups.
inline Vec lie_second(const ClosedLoopField& field, const Vec& s) {
  detail::check_field(field, s);
  const ControlAffineSystem& sys = *field.system;
  const Vec g = sys.drift(s);
  const Mat h = sys.control(s);
  const Vec a = field.action(s);
  const Mat da = field.action_jacobian(s);
  const Mat dg = drift_jacobian_at(sys, s);
  const std::vector<Mat> dh = control_jacobians_at(sys, s);
  if (static_cast<int>(dh.size()) != sys.action_dim) throw DimensionError("lie_second: control Jacobian count");

  const Vec x = g + h * a;
  Vec out = dg * x;        // sum_k X_k d_k g_i
  out.noalias() += h * (da * x);  // sum_k X_k h_{i,j'} d_k a_j'
  for (int j = 0; j < sys.action_dim; ++j) out.noalias() += a(j) * (dh[j] * x);  // (J h_j X) a_j
  return out;
}

inline LieExpansion lie_expansion(const ClosedLoopField& field, const Vec& s) {
  return {s, lie_first(field, s), lie_second(field, s)};
}

inline Vec exp_map_trunc2(const ClosedLoopField& field, const Vec& s, double t) {
  return lie_expansion(field, s).evaluate(t);
}

struct TruncationFit {
  double slope = 0.0;
  bool truncated = false;       // every error at round-off level; slope undefined
  std::vector<double> errors;   // |trunc2 - rollout| per grid point
};

/// Least-squares slope of log |exp_map_trunc2 - rollout| against log t. The reference
/// rollout uses RK4 with step min(dt_ref, t / 20).
inline TruncationFit truncation_error_slope(const ClosedLoopField& field, const Vec& s,
                                            const std::vector<double>& t_grid, double dt_ref) {
  if (t_grid.size() < 2) throw DegenerateError("truncation_error_slope: need at least two grid points");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > 0.0)) throw DegenerateError("truncation_error_slope: grid must be positive");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw DegenerateError("truncation_error_slope: grid must be sorted");
  }
  if (std::log10(t_grid.back() / t_grid.front()) < 1.5)
    throw DegenerateError("truncation_error_slope: grid must span at least 1.5 decades");
  if (!(dt_ref > 0.0)) throw DomainError("truncation_error_slope: dt_ref must be positive");

  const LieExpansion series = lie_expansion(field, s);
  TruncationFit fit;
  const double scale = 1.0 + s.norm();
  double max_err = 0.0;
  for (double t : t_grid) {
    const Trajectory ref = rollout(*field.system, FieldPolicy{&field}, s, t, std::min(dt_ref, t / 20.0));
    const double err = (series.evaluate(t) - ref.final_state()).norm();
    fit.errors.push_back(err);
    max_err = std::max(max_err, err);
  }
  if (max_err <= 1e-12 * scale) {
    fit.truncated = true;
    fit.slope = std::nan("");
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double lx = std::log(t_grid[i]);
    const double ly = std::log(std::max(fit.errors[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return fit;
}

}  // namespace attainable
