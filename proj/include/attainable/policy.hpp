#pragma once

// Two-layer GeLU policy f(s; W, C) = n^{-1/2} sum_k C_k gelu(W_k . s), its linearisation
// around the initial first-layer weights W0, and the bounded linearised policy family.
//
// Weight layout: W is a flat vector of n blocks of length input_dim; block k holds the
// first-layer weights of hidden unit k. C0 is action_dim x n and never trained.

#include "activation.hpp"
#include "errors.hpp"
#include "types.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace attainable {

struct TwoLayerParams {
  int width = 0;
  int state_dim = 0;
  int action_dim = 0;
  bool augment_state = false;  // append a constant 1 to the input (bias surrogate)
  Vec w0;                      // width * input_dim
  Mat c0;                      // action_dim x width
  Vec w;                       // width * input_dim

  int input_dim() const { return state_dim + (augment_state ? 1 : 0); }
  Eigen::Index weight_count() const { return static_cast<Eigen::Index>(width) * input_dim(); }

  /// Copy with different first-layer weights.
  TwoLayerParams with_weights(Vec weights) const {
    detail::require_dims(weights.size() == weight_count(), "with_weights: weight count");
    TwoLayerParams p = *this;
    p.w = std::move(weights);
    return p;
  }
};

struct FamilySpec {
  std::reference_wrapper<const TwoLayerParams> base;
  double radius = 1.0;

  FamilySpec(const TwoLayerParams& params, double r) : base(params), radius(r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("FamilySpec: radius must be positive and finite");
  }
  int width() const { return base.get().width; }
};

inline TwoLayerParams init_params(int width, int state_dim, int action_dim, std::uint64_t seed,
                                  bool augment_state = false) {
  if (width < 1 || state_dim < 1 || action_dim < 1)
    throw DomainError("init_params: sizes must be >= 1");
  TwoLayerParams p;
  p.width = width;
  p.state_dim = state_dim;
  p.action_dim = action_dim;
  p.augment_state = augment_state;
  const int d_in = p.input_dim();

  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));

  p.c0.resize(action_dim, width);
  for (int k = 0; k < width; ++k) {
    for (int j = 0; j < action_dim; ++j) {
      double c = uniform(rng);
      while (c == -1.0) c = uniform(rng);  // open interval
      p.c0(j, k) = c;
    }
  }
  p.w0.resize(p.weight_count());
  for (Eigen::Index i = 0; i < p.w0.size(); ++i) p.w0(i) = normal(rng);
  p.w = p.w0;
  return p;
}

namespace detail {

inline void check_state(const TwoLayerParams& p, const Vec& s) {
  require_dims(s.size() == p.state_dim, "policy: state dimension");
  require_dims(p.w.size() == p.weight_count() && p.w0.size() == p.weight_count(),
               "policy: weight vector length");
  require_dims(p.c0.rows() == p.action_dim && p.c0.cols() == p.width, "policy: C0 shape");
}

inline Vec network_input(const TwoLayerParams& p, const Vec& s) {
  if (!p.augment_state) return s;
  Vec x(s.size() + 1);
  x << s, 1.0;
  return x;
}

inline Eigen::Map<const Mat> blocks(const TwoLayerParams& p, const Vec& weights) {
  return Eigen::Map<const Mat>(weights.data(), p.input_dim(), p.width);
}

/// Pre-activations W0_k . x for all hidden units.
inline Vec initial_preactivations(const TwoLayerParams& p, const Vec& x) {
  return blocks(p, p.w0).transpose() * x;
}

inline Vec gelu_prime_of(const Vec& z) {
  Vec out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = normal_cdf(z(i)) + z(i) * normal_pdf(z(i));
  return out;
}

inline Vec gelu_second_of(const Vec& z) {
  Vec out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = normal_pdf(z(i)) * (2.0 - z(i) * z(i));
  return out;
}

inline Vec gelu_of(const Vec& z) {
  Vec out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = z(i) * normal_cdf(z(i));
  return out;
}

inline double inv_sqrt_width(const TwoLayerParams& p) { return 1.0 / std::sqrt(static_cast<double>(p.width)); }

/// d/ds of Phi(s; W0) v for an arbitrary weight vector v (action_dim x state_dim).
inline Mat feature_product_jacobian(const TwoLayerParams& p, const Vec& s, const Vec& v) {
  const Vec x = network_input(p, s);
  const Vec z = initial_preactivations(p, x);
  const auto vb = blocks(p, v);
  const auto w0b = blocks(p, p.w0);
  const Vec vx = vb.transpose() * x;  // v_k . x
  const Vec d1 = gelu_prime_of(z);
  const Vec d2 = gelu_second_of(z).cwiseProduct(vx);
  const Mat full = p.c0 * (d1.asDiagonal() * vb.transpose() + d2.asDiagonal() * w0b.transpose());
  return inv_sqrt_width(p) * full.leftCols(p.state_dim);
}

}  // namespace detail

/// f(s; W, C0) at the current weights.
inline Vec forward_canonical(const TwoLayerParams& p, const Vec& s) {
  detail::check_state(p, s);
  const Vec x = detail::network_input(p, s);
  const Vec z = detail::blocks(p, p.w).transpose() * x;
  return detail::inv_sqrt_width(p) * (p.c0 * detail::gelu_of(z));
}

/// Phi(s; W0): action_dim x (width * input_dim); block k = C0_k gelu'(W0_k . x) x^T / sqrt(n).
inline Mat feature_matrix(const TwoLayerParams& p, const Vec& s) {
  detail::check_state(p, s);
  const Vec x = detail::network_input(p, s);
  const Vec d1 = detail::gelu_prime_of(detail::initial_preactivations(p, x));
  const int d_in = p.input_dim();
  Mat phi(p.action_dim, p.weight_count());
  const double scale = detail::inv_sqrt_width(p);
  for (int k = 0; k < p.width; ++k)
    phi.middleCols(static_cast<Eigen::Index>(k) * d_in, d_in) = (scale * d1(k)) * p.c0.col(k) * x.transpose();
  return phi;
}

/// f(s; W0) + Phi(s; W0) (W - W0).
inline Vec forward_linearised(const TwoLayerParams& p, const Vec& s) {
  detail::check_state(p, s);
  const Vec x = detail::network_input(p, s);
  const Vec z = detail::initial_preactivations(p, x);
  const Vec dx = detail::blocks(p, p.w).transpose() * x - z;  // (W_k - W0_k) . x
  const Vec hidden = detail::gelu_of(z) + detail::gelu_prime_of(z).cwiseProduct(dx);
  return detail::inv_sqrt_width(p) * (p.c0 * hidden);
}

/// Phi(s; W0) W, the bounded-family form without the offset term.
inline Vec forward_family(const TwoLayerParams& p, const Vec& s) {
  detail::check_state(p, s);
  const Vec x = detail::network_input(p, s);
  const Vec z = detail::initial_preactivations(p, x);
  const Vec wx = detail::blocks(p, p.w).transpose() * x;
  return detail::inv_sqrt_width(p) * (p.c0 * detail::gelu_prime_of(z).cwiseProduct(wx));
}

/// d forward_family / ds, action_dim x state_dim.
inline Mat policy_jacobian(const TwoLayerParams& p, const Vec& s) {
  detail::check_state(p, s);
  return detail::feature_product_jacobian(p, s, p.w);
}

/// d forward_linearised / ds, action_dim x state_dim.
inline Mat linearised_jacobian(const TwoLayerParams& p, const Vec& s) {
  detail::check_state(p, s);
  const Vec x = detail::network_input(p, s);
  const Vec d1 = detail::gelu_prime_of(detail::initial_preactivations(p, x));
  const Mat base = detail::inv_sqrt_width(p) *
                   (p.c0 * d1.asDiagonal() * detail::blocks(p, p.w0).transpose()).leftCols(p.state_dim);
  return base + detail::feature_product_jacobian(p, s, p.w - p.w0);
}

/// Uniform draw from the ball ||W - W0|| <= r: Gaussian direction, radius r u^{1/D}.
inline Vec sample_family(const FamilySpec& spec, std::uint64_t seed) {
  const TwoLayerParams& base = spec.base.get();
  const Eigen::Index dim = base.weight_count();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vec direction(dim);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < dim; ++i) direction(i) = normal(rng);
    norm = direction.norm();
  } while (norm == 0.0);
  const double radius = spec.radius * std::pow(uniform(rng), 1.0 / static_cast<double>(dim));
  return base.w0 + (radius / norm) * direction;
}

// ---------------------------------------------------------------------------
// Policy adaptors usable wherever a StatePolicy is expected

struct CanonicalPolicy {
  const TwoLayerParams* params;
  Vec operator()(const Vec& s) const { return forward_canonical(*params, s); }
};

struct LinearisedPolicy {
  const TwoLayerParams* params;
  Vec operator()(const Vec& s) const { return forward_linearised(*params, s); }
};

struct FamilyPolicy {
  const TwoLayerParams* params;
  Vec operator()(const Vec& s) const { return forward_family(*params, s); }
};

// ---------------------------------------------------------------------------
// CSV persistence
//
//   width,state_dim,action_dim,augment_state
//   <n>,<ds>,<da>,<0|1>
//   w0,<values...>
//   c0,<row-major values...>
//   w,<values...>

namespace detail {

inline void write_row(std::ostream& os, const char* tag, const double* data, Eigen::Index count) {
  os << tag;
  for (Eigen::Index i = 0; i < count; ++i) os << ',' << data[i];
  os << '\n';
}

inline std::vector<double> parse_tagged_row(const std::string& line, const std::string& tag) {
  std::stringstream ss(line);
  std::string cell;
  if (!std::getline(ss, cell, ',') || cell != tag)
    throw ConfigError("params csv: expected row '" + tag + "'");
  std::vector<double> values;
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  return values;
}

}  // namespace detail

inline void save_params_csv(const TwoLayerParams& p, std::ostream& os) {
  os << std::setprecision(17);
  os << "width,state_dim,action_dim,augment_state\n";
  os << p.width << ',' << p.state_dim << ',' << p.action_dim << ',' << (p.augment_state ? 1 : 0) << '\n';
  detail::write_row(os, "w0", p.w0.data(), p.w0.size());
  const RowMat c = p.c0;
  detail::write_row(os, "c0", c.data(), c.size());
  detail::write_row(os, "w", p.w.data(), p.w.size());
}

inline TwoLayerParams load_params_csv(std::istream& is) {
  std::string header, sizes, w0_line, c0_line, w_line;
  if (!std::getline(is, header) || !std::getline(is, sizes) || !std::getline(is, w0_line) ||
      !std::getline(is, c0_line) || !std::getline(is, w_line))
    throw ConfigError("params csv: truncated file");
  if (header != "width,state_dim,action_dim,augment_state") throw ConfigError("params csv: bad header");
  TwoLayerParams p;
  char comma = 0;
  int augment = 0;
  std::stringstream ss(sizes);
  ss >> p.width >> comma >> p.state_dim >> comma >> p.action_dim >> comma >> augment;
  if (!ss || p.width < 1 || p.state_dim < 1 || p.action_dim < 1) throw ConfigError("params csv: bad sizes");
  p.augment_state = augment != 0;
  const auto w0 = detail::parse_tagged_row(w0_line, "w0");
  const auto c0 = detail::parse_tagged_row(c0_line, "c0");
  const auto w = detail::parse_tagged_row(w_line, "w");
  if (static_cast<Eigen::Index>(w0.size()) != p.weight_count() ||
      static_cast<Eigen::Index>(w.size()) != p.weight_count() ||
      c0.size() != static_cast<std::size_t>(p.action_dim) * p.width)
    throw ConfigError("params csv: value counts do not match sizes");
  p.w0 = Eigen::Map<const Vec>(w0.data(), p.weight_count());
  p.w = Eigen::Map<const Vec>(w.data(), p.weight_count());
  p.c0 = Eigen::Map<const RowMat>(c0.data(), p.action_dim, p.width);
  return p;
}

inline void save_params_csv(const TwoLayerParams& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  save_params_csv(p, os);
}

inline TwoLayerParams load_params_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  return load_params_csv(is);
}

}  // namespace attainable
