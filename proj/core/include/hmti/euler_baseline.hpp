#pragma once

// Explicit Euler on the first-order form (u, v)' = (v, N(u, v)) with one step
// of size delta_t per domain. A reference integrator for the gradient-growth
// contrast; it uses the same model interface, evaluated as a single cell with
// both nodal J values set to v.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "hmti/nonlinearity.hpp"
#include "hmti/sensitivity.hpp"

namespace hmti {

struct EulerPoint {
  Eigen::VectorXd u, v;
};

/// N(u, v) and, optionally, its partials from a one-cell evaluation.
Eigen::VectorXd pointwise_model(const NonlinearityModel& model, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                const ConditioningVector& z, Eigen::MatrixXd* d_u = nullptr,
                                Eigen::MatrixXd* d_v = nullptr);

std::vector<EulerPoint> euler_rollout(const NonlinearityModel& model, const ConditioningVector& z,
                                      const Eigen::VectorXd& u0, const Eigen::VectorXd& v0, double delta_t,
                                      std::size_t n_steps);

/// Spectral norm of d(v_N, u_N)/d theta for every N in n_list, by forward
/// accumulation of the Euler recurrence. Interface ordering matches the
/// mortar scheme (rate first, then state).
std::vector<GradientNormPoint> euler_gradient_norm_sweep(const NonlinearityModel& model, const ConditioningVector& z,
                                                         const Eigen::VectorXd& u0, const Eigen::VectorXd& v0,
                                                         double delta_t, const std::vector<std::size_t>& n_list);

}  // namespace hmti
