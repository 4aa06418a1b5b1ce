#pragma once

// Control-affine systems  ds/dt = g(s) + h(s) a,  their integrators, the
// discounted value function and the finite-difference action-gradient oracle.

#include "errors.hpp"
#include "types.hpp"

#include <cmath>
#include <concepts>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace attainable {

/// Anything mapping a state to an action vector.
template <class P>
concept StatePolicy = requires(const P& p, const Vec& s) {
  { p(s) } -> std::convertible_to<Vec>;
};

struct ControlAffineSystem {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;

  std::function<Vec(const Vec&)> drift;    // g: R^ds -> R^ds
  std::function<Mat(const Vec&)> control;  // h: R^ds -> R^{ds x da}, column j is h_j

  // Optional analytic Jacobians; empty means central finite differences.
  std::function<Mat(const Vec&)> drift_jacobian;                  // dg/ds
  std::function<std::vector<Mat>(const Vec&)> control_jacobians;  // J h_j, (i,k) = d h_{i,j} / d s_k

  std::function<double(const Vec&)> reward;
  double horizon = 1.0;
  double discount = 1.0;
  std::function<Mat(const Vec&)> exploration;  // sigma: R^ds -> R^{ds x ds}
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;

  std::size_t size() const { return times.size(); }
  const Vec& final_state() const { return states.back(); }
};

/// Catalog selector as it appears in experiment configs.
struct SystemCatalogEntry {
  std::string name;
  std::map<std::string, double> parameters;
  std::optional<Mat> a;  // linear_generic only
  std::optional<Mat> b;
};

inline constexpr double kDivergenceBound = 1e8;
inline constexpr double kJacobianFdStep = 1e-5;

// ---------------------------------------------------------------------------
// Jacobians with finite-difference fallback

inline Mat finite_difference_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& s,
                                      double step = kJacobianFdStep) {
  const Vec f0 = f(s);
  Mat jac(f0.size(), s.size());
  Vec probe = s;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    probe(k) = s(k) + step;
    const Vec up = f(probe);
    probe(k) = s(k) - step;
    const Vec down = f(probe);
    probe(k) = s(k);
    jac.col(k) = (up - down) / (2.0 * step);
  }
  return jac;
}

inline Mat drift_jacobian_at(const ControlAffineSystem& sys, const Vec& s) {
  if (sys.drift_jacobian) return sys.drift_jacobian(s);
  return finite_difference_jacobian(sys.drift, s);
}

inline std::vector<Mat> control_jacobians_at(const ControlAffineSystem& sys, const Vec& s) {
  if (sys.control_jacobians) return sys.control_jacobians(s);
  std::vector<Mat> out;
  out.reserve(sys.action_dim);
  for (int j = 0; j < sys.action_dim; ++j) {
    auto column = [&sys, j](const Vec& x) -> Vec { return sys.control(x).col(j); };
    out.push_back(finite_difference_jacobian(column, s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed loop

template <StatePolicy Policy>
Vec closed_loop_derivative(const ControlAffineSystem& sys, const Policy& policy, const Vec& s) {
  detail::require_dims(s.size() == sys.state_dim, "closed_loop_derivative: state dimension");
  const Vec a = policy(s);
  detail::require_dims(a.size() == sys.action_dim, "closed_loop_derivative: action dimension");
  Vec ds = sys.drift(s);
  const Mat h = sys.control(s);
  detail::require_dims(ds.size() == sys.state_dim && h.rows() == sys.state_dim &&
                           h.cols() == sys.action_dim,
                       "closed_loop_derivative: system output dimension");
  ds.noalias() += h * a;
  return ds;
}

/// Policy that ignores the state and always returns the same action.
struct ConstantPolicy {
  Vec action;
  Vec operator()(const Vec&) const { return action; }
};

namespace detail {

inline int step_count(double duration, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("integrator: dt must be positive");
  if (!(duration > 0.0) || !std::isfinite(duration))
    throw DomainError("integrator: duration must be positive");
  // Uniform steps that land exactly on the requested duration.
  return std::max(1, static_cast<int>(std::ceil(duration / dt - 1e-9)));
}

inline void guard(const Vec& s, double t) {
  if (!s.allFinite() || s.cwiseAbs().maxCoeff() > kDivergenceBound)
    throw DivergenceError("rollout diverged", t);
}

}  // namespace detail

/// Classical fixed-step RK4. Steps are uniform with size duration / ceil(duration / dt).
template <StatePolicy Policy>
Trajectory rollout(const ControlAffineSystem& sys, const Policy& policy, const Vec& s0,
                   double duration, double dt) {
  detail::require_dims(s0.size() == sys.state_dim, "rollout: start state dimension");
  const int steps = detail::step_count(duration, dt);
  const double h = duration / steps;
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(s0);
  Vec s = s0;
  auto f = [&](const Vec& x) { return closed_loop_derivative(sys, policy, x); };
  for (int k = 1; k <= steps; ++k) {
    const Vec k1 = f(s);
    const Vec k2 = f(s + 0.5 * h * k1);
    const Vec k3 = f(s + 0.5 * h * k2);
    const Vec k4 = f(s + h * k3);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double t = k * h;
    detail::guard(s, t);
    traj.times.push_back(t);
    traj.states.push_back(s);
  }
  return traj;
}

/// Forward Euler with the same step rule as rollout().
template <StatePolicy Policy>
Trajectory rollout_euler(const ControlAffineSystem& sys, const Policy& policy, const Vec& s0,
                         double duration, double dt) {
  detail::require_dims(s0.size() == sys.state_dim, "rollout_euler: start state dimension");
  const int steps = detail::step_count(duration, dt);
  const double h = duration / steps;
  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(s0);
  Vec s = s0;
  for (int k = 1; k <= steps; ++k) {
    s += h * closed_loop_derivative(sys, policy, s);
    const double t = k * h;
    detail::guard(s, t);
    traj.times.push_back(t);
    traj.states.push_back(s);
  }
  return traj;
}

/// Euler-Maruyama for dS = (g + h pi) dt + sigma dW. Reproducible given the seed.
template <StatePolicy Policy>
Trajectory rollout_sde(const ControlAffineSystem& sys, const Policy& policy, const Vec& s0,
                       double duration, double dt, std::uint64_t seed) {
  detail::require_dims(s0.size() == sys.state_dim, "rollout_sde: start state dimension");
  if (!sys.exploration) throw DomainError("rollout_sde: system has no exploration map");
  const int steps = detail::step_count(duration, dt);
  const double h = duration / steps;
  const double sqrt_h = std::sqrt(h);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(s0);
  Vec s = s0;
  Vec noise(sys.state_dim);
  for (int k = 1; k <= steps; ++k) {
    for (int i = 0; i < sys.state_dim; ++i) noise(i) = normal(rng);
    const Mat sigma = sys.exploration(s);
    detail::require_dims(sigma.rows() == sys.state_dim && sigma.cols() == sys.state_dim,
                         "rollout_sde: exploration map dimension");
    s += h * closed_loop_derivative(sys, policy, s) + sqrt_h * (sigma * noise);
    const double t = k * h;
    detail::guard(s, t);
    traj.times.push_back(t);
    traj.states.push_back(s);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Value function and action-gradient oracle

namespace detail {

/// Trapezoid of exp(-(l + offset)/lambda) r(s_l) with l = time_origin + trajectory time.
inline double discounted_reward_integral(const ControlAffineSystem& sys, const Trajectory& traj,
                                         double time_origin, double offset) {
  double total = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double l = time_origin + traj.times[k];
    const double cur = std::exp(-(l + offset) / sys.discount) * sys.reward(traj.states[k]);
    if (k > 0) total += 0.5 * (traj.times[k] - traj.times[k - 1]) * (cur + prev);
    prev = cur;
  }
  return total;
}

inline constexpr double kTimeSlack = 1e-12;

}  // namespace detail

/// v(s, t) = int_t^T exp(-(l + t)/lambda) r(s_l) dl along the deterministic RK4 rollout.
template <StatePolicy Policy>
double value(const ControlAffineSystem& sys, const Policy& policy, const Vec& s, double t,
             double dt) {
  if (!(t >= 0.0) || t > sys.horizon + detail::kTimeSlack)
    throw DomainError("value: t outside [0, horizon]");
  const double remaining = sys.horizon - t;
  if (remaining <= detail::kTimeSlack) return 0.0;
  const Trajectory traj = rollout(sys, policy, s, remaining, dt);
  return detail::discounted_reward_integral(sys, traj, t, t);
}

/// Hold `a` for a window h, collect int_0^h exp(-(l + t)/lambda) r(s_l) dl, then follow the
/// policy: Q_h = v(s_h, t + h) + window reward. Requires t + h <= horizon.
template <StatePolicy Policy>
double q_h(const ControlAffineSystem& sys, const Policy& policy, const Vec& s, const Vec& a,
           double t, double h, double dt) {
  if (!(h > 0.0)) throw DomainError("q_h: window must be positive");
  if (!(t >= 0.0) || t + h > sys.horizon + detail::kTimeSlack)
    throw DomainError("q_h: t + h exceeds horizon");
  detail::require_dims(a.size() == sys.action_dim, "q_h: action dimension");
  const Trajectory held = rollout(sys, ConstantPolicy{a}, s, h, dt);
  const double window = detail::discounted_reward_integral(sys, held, 0.0, t);
  return window + value(sys, policy, held.final_state(), std::min(t + h, sys.horizon), dt);
}

/// Central differences of q_h in each action coordinate.
template <StatePolicy Policy>
Vec grad_a_q(const ControlAffineSystem& sys, const Policy& policy, const Vec& s, const Vec& a,
             double t, double fd_step, double h, double dt) {
  if (!(fd_step > 0.0)) throw DomainError("grad_a_q: fd_step must be positive");
  Vec grad(sys.action_dim);
  Vec probe = a;
  for (int i = 0; i < sys.action_dim; ++i) {
    probe(i) = a(i) + fd_step;
    const double up = q_h(sys, policy, s, probe, t, h, dt);
    probe(i) = a(i) - fd_step;
    const double down = q_h(sys, policy, s, probe, t, h, dt);
    probe(i) = a(i);
    grad(i) = (up - down) / (2.0 * fd_step);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Built-in systems

namespace detail {

inline double negative_squared_norm(const Vec& s) { return -s.squaredNorm(); }

inline void attach_defaults(ControlAffineSystem& sys, double exploration_scale) {
  sys.reward = negative_squared_norm;
  const int d = sys.state_dim;
  sys.exploration = [d, exploration_scale](const Vec&) -> Mat {
    return exploration_scale * Mat::Identity(d, d);
  };
}

}  // namespace detail

/// ds/dt = A s + B a with constant Jacobians. Reward -|s|^2.
inline ControlAffineSystem make_linear_system(const Mat& a, const Mat& b, std::string name = "linear_generic",
                                              double exploration_scale = 0.1) {
  detail::require_dims(a.rows() == a.cols() && b.rows() == a.rows() && b.cols() >= 1,
                       "make_linear_system: A must be square and B must have matching rows");
  if (!a.allFinite() || !b.allFinite()) throw DomainError("make_linear_system: non-finite entries");
  ControlAffineSystem sys;
  sys.name = std::move(name);
  sys.state_dim = static_cast<int>(a.rows());
  sys.action_dim = static_cast<int>(b.cols());
  sys.drift = [a](const Vec& s) -> Vec { return a * s; };
  sys.control = [b](const Vec&) -> Mat { return b; };
  sys.drift_jacobian = [a](const Vec&) -> Mat { return a; };
  const int d = sys.state_dim;
  const int m = sys.action_dim;
  sys.control_jacobians = [d, m](const Vec&) {
    return std::vector<Mat>(static_cast<std::size_t>(m), Mat::Zero(d, d));
  };
  detail::attach_defaults(sys, exploration_scale);
  return sys;
}

/// Shift matrix (ones on the superdiagonal) of size d.
inline Mat chain_drift_matrix(int d) {
  Mat a = Mat::Zero(d, d);
  for (int i = 0; i + 1 < d; ++i) a(i, i + 1) = 1.0;
  return a;
}

/// Chain of integrators driven at the last coordinate; fully reachable for every d.
inline ControlAffineSystem make_chain_integrator(int d, double exploration_scale = 0.1) {
  if (d < 1) throw DomainError("chain_integrator: state_dim must be >= 1");
  Mat b = Mat::Zero(d, 1);
  b(d - 1, 0) = 1.0;
  return make_linear_system(chain_drift_matrix(d), b, "chain_integrator", exploration_scale);
}

/// Planar pendulum, s = (angle, angular velocity): ds/dt = (s2, -sin s1 + a).
inline ControlAffineSystem make_pendulum(double exploration_scale = 0.1) {
  ControlAffineSystem sys;
  sys.name = "pendulum";
  sys.state_dim = 2;
  sys.action_dim = 1;
  sys.drift = [](const Vec& s) -> Vec { return Eigen::Vector2d(s(1), -std::sin(s(0))); };
  sys.control = [](const Vec&) -> Mat { return Eigen::Vector2d(0.0, 1.0); };
  sys.drift_jacobian = [](const Vec& s) -> Mat {
    Mat j(2, 2);
    j << 0.0, 1.0, -std::cos(s(0)), 0.0;
    return j;
  };
  sys.control_jacobians = [](const Vec&) { return std::vector<Mat>{Mat::Zero(2, 2)}; };
  detail::attach_defaults(sys, exploration_scale);
  return sys;
}

struct CartPoleParameters {
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double length = 0.5;
  double gravity = 9.81;
};

/// Frictionless cart-pole, s = (x, theta, dx, dtheta), theta = 0 hanging down, force on the
/// cart as the single action. Jacobians come from finite differences.
inline ControlAffineSystem make_cartpole(CartPoleParameters p = {}, double exploration_scale = 0.1) {
  ControlAffineSystem sys;
  sys.name = "cartpole";
  sys.state_dim = 4;
  sys.action_dim = 1;
  sys.drift = [p](const Vec& s) -> Vec {
    const double st = std::sin(s(1));
    const double ct = std::cos(s(1));
    const double den = p.mass_cart + p.mass_pole * st * st;
    Vec out(4);
    out(0) = s(2);
    out(1) = s(3);
    out(2) = p.mass_pole * st * (p.length * s(3) * s(3) + p.gravity * ct) / den;
    out(3) = (-p.mass_pole * p.length * s(3) * s(3) * ct * st -
              (p.mass_cart + p.mass_pole) * p.gravity * st) /
             (p.length * den);
    return out;
  };
  sys.control = [p](const Vec& s) -> Mat {
    const double st = std::sin(s(1));
    const double den = p.mass_cart + p.mass_pole * st * st;
    Mat h = Mat::Zero(4, 1);
    h(2, 0) = 1.0 / den;
    h(3, 0) = -std::cos(s(1)) / (p.length * den);
    return h;
  };
  detail::attach_defaults(sys, exploration_scale);
  return sys;
}

namespace detail {
inline double param_or(const SystemCatalogEntry& e, const std::string& key, double fallback) {
  auto it = e.parameters.find(key);
  return it == e.parameters.end() ? fallback : it->second;
}
}  // namespace detail

/// Builds a catalog system. Recognised parameters: state_dim (chain), horizon, discount,
/// exploration, and the cart-pole constants.
inline ControlAffineSystem make_system(const SystemCatalogEntry& entry) {
  const double explore = detail::param_or(entry, "exploration", 0.1);
  ControlAffineSystem sys;
  if (entry.name == "chain_integrator") {
    const double d = detail::param_or(entry, "state_dim", 3.0);
    if (d < 1.0 || d != std::floor(d)) throw ConfigError("chain_integrator: state_dim must be a positive integer");
    sys = make_chain_integrator(static_cast<int>(d), explore);
  } else if (entry.name == "linear_generic") {
    if (!entry.a || !entry.b) throw ConfigError("linear_generic: matrices A and B are required");
    try {
      sys = make_linear_system(*entry.a, *entry.b, "linear_generic", explore);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  } else if (entry.name == "pendulum") {
    sys = make_pendulum(explore);
  } else if (entry.name == "cartpole") {
    CartPoleParameters p;
    p.mass_cart = detail::param_or(entry, "mass_cart", p.mass_cart);
    p.mass_pole = detail::param_or(entry, "mass_pole", p.mass_pole);
    p.length = detail::param_or(entry, "length", p.length);
    p.gravity = detail::param_or(entry, "gravity", p.gravity);
    sys = make_cartpole(p, explore);
  } else {
    throw ConfigError("unknown system '" + entry.name + "'");
  }
  sys.horizon = detail::param_or(entry, "horizon", sys.horizon);
  sys.discount = detail::param_or(entry, "discount", sys.discount);
  if (!(sys.horizon > 0.0) || !(sys.discount > 0.0))
    throw ConfigError("horizon and discount must be positive");
  return sys;
}

}  // namespace attainable
