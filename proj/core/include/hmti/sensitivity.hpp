#pragma once

// Gradients of rollout losses with respect to theta by implicit
// differentiation of every domain solve, plus the interface-Jacobian and
// gradient-norm diagnostics built on the same linearization.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmti/feec.hpp"
#include "hmti/mortar.hpp"
#include "hmti/nonlinearity.hpp"
#include "hmti/state.hpp"

namespace hmti {

enum class LossKind { Mse, L1 };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

/// Targets are per-domain M x d matrices matched to the cell values of u.
/// The optional J term compares nodal values ((M+1) x d per domain) and is
/// added with weight `j_weight`.
struct LossSpec {
  LossKind kind = LossKind::Mse;
  std::vector<Eigen::MatrixXd> targets;
  std::vector<double> weights;  // empty: all ones
  std::vector<Eigen::MatrixXd> j_targets;
  double j_weight = 0.0;
};

/// Cotangent on one domain's unknowns. `j` may be left empty.
struct DomainCotangent {
  Eigen::MatrixXd u;  // M x d
  Eigen::MatrixXd j;  // (M+1) x d or empty
};

struct LossResult {
  double value = 0.0;
  std::vector<DomainCotangent> cotangents;
};

/// Loss averaged over every (domain, cell, component) entry; L1 uses sign(0) = 0.
LossResult loss_and_cotangents(const Rollout& states, const LossSpec& spec);

struct AdjointWorkspace {
  std::vector<Eigen::VectorXd> w;  // adjoint solution per domain (flattened layout)
  Eigen::VectorXd grad_theta;
  InterfaceState grad_y0;          // derivative with respect to the initial interface state
};

/// Reverse sweep: J_i^T w_i = g_i + lift(w_{i+1}), grad += h * theta_vjp(w_i on the u rows).
/// `terminal` is an optional cotangent on restrict(states.back()).
AdjointWorkspace adjoint_sweep(const Rollout& states, const InterfaceState& y0, const NonlinearityModel& model,
                               const ConditioningVector& z, const LinearBlocks& blocks,
                               const std::vector<DomainCotangent>& cotangents,
                               const InterfaceState* terminal = nullptr);

Eigen::VectorXd backward(const Rollout& states, const InterfaceState& y0, const NonlinearityModel& model,
                         const ConditioningVector& z, const LinearBlocks& blocks,
                         const std::vector<DomainCotangent>& cotangents);

/// Interface selectors and the local maps of one solved domain. Rows and
/// columns of interface quantities are ordered (J_end(0..d-1), lambda(0..d-1)).
struct InterfaceJacobian {
  Eigen::MatrixXd pt_jinv;    // P^T J^{-1}, 2d x d(2M+3)
  Eigen::MatrixXd pt_jinv_q;  // P^T J^{-1} Q, 2d x 2d
  double norm_pt_jinv = 0.0;
  double norm_pt_jinv_q = 0.0;
};

/// P^T (2d x n): picks J_M and lambda_out.
Eigen::MatrixXd interface_selector_p(Eigen::Index m_cells, Eigen::Index dim);
/// Q (n x 2d): lifts an interface vector into the continuity rows.
Eigen::MatrixXd interface_lift_q(Eigen::Index m_cells, Eigen::Index dim);

InterfaceJacobian interface_jacobian(const DomainState& solved, const NonlinearityModel& model,
                                     const ConditioningVector& z, const LinearBlocks& blocks);

/// One entry per sample interface state: the domain is solved from it and its
/// interface Jacobian evaluated at the solution.
std::vector<InterfaceJacobian> interface_jacobian_norms(const NonlinearityModel& model, const ConditioningVector& z,
                                                        const LinearBlocks& blocks,
                                                        const std::vector<InterfaceState>& y_samples,
                                                        const NewtonSettings& settings = {});

/// d y_N / d theta (2d x N_p) for every N in `at` (1-based domain counts),
/// by forward accumulation of S_i = P^T J_i^{-1} (Q S_{i-1} - dH_i/dtheta).
std::vector<Eigen::MatrixXd> interface_sensitivity_forward(const Rollout& states, const NonlinearityModel& model,
                                                           const ConditioningVector& z, const LinearBlocks& blocks,
                                                           const std::vector<std::size_t>& at);

/// The same matrix for the last domain of `states`, by 2d adjoint sweeps.
Eigen::MatrixXd interface_sensitivity_adjoint(const Rollout& states, const InterfaceState& y0,
                                              const NonlinearityModel& model, const ConditioningVector& z,
                                              const LinearBlocks& blocks);

struct GradientNormPoint {
  std::size_t n_domains = 0;
  double norm = 0.0;  // spectral norm of d y_N / d theta
};

std::vector<GradientNormPoint> gradient_norm_sweep(const NonlinearityModel& model, const ConditioningVector& z,
                                                   const LinearBlocks& blocks, const InterfaceState& y0,
                                                   const std::vector<std::size_t>& n_list,
                                                   const NewtonSettings& settings = {});

/// Largest singular value.
double spectral_norm(const Eigen::MatrixXd& a);

}  // namespace hmti
