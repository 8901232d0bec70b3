#pragma once

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "hmti/hmti.hpp"

namespace hmti::testing {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

/// Small transformer with a perturbed (nonzero) output head.
inline LocalTransformer random_transformer(Eigen::Index d, Eigen::Index p, std::uint64_t seed, double scale = 0.3,
                                           Eigen::Index model_dim = 8) {
  LocalTransformerConfig cfg;
  cfg.model_dim = model_dim;
  cfg.mlp_hidden = 2 * model_dim;
  cfg.n_heads = 2;
  cfg.state_dim = d;
  cfg.conditioning_dim = p;
  cfg.init_seed = seed;
  LocalTransformer t(cfg);
  std::mt19937_64 rng(seed + 1000);
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd th = t.params();
  for (Eigen::Index k = 0; k < th.size(); ++k) th(k) += u(rng);
  t.set_params(th);
  return t;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

}  // namespace hmti::testing
