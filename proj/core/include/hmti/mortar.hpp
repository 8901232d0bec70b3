#pragma once

// Per-domain nonlinear system H(Y_i; y_{i-1}, theta) = 0 of the mixed scheme and
// the autoregressive rollout that chains domains through interface states.
//
// Residual rows, per component (M cells, h = cell width):
//   M_V J + delta^T u - e_last lambda_out + e_first lambda_in    (M+1 rows)
//   delta J - M_Q N(u, J; theta)                                 (M rows)
//   J_0 - j_end_prev                                             (1 row)
//   lambda_in - lambda_out_prev                                  (1 row)
// so that J' = N and u' = J in the weak sense.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "hmti/feec.hpp"
#include "hmti/nonlinearity.hpp"
#include "hmti/state.hpp"

namespace hmti {

struct NewtonSettings {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  int max_iters = 50;
  int damping_halvings = 10;

  void validate() const;
};

struct NewtonReport {
  int iterations = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  double tolerance = 0.0;
};

enum class GuessKind {
  /// J constant at j_end_prev, u moving ballistically from lambda_prev.
  Ballistic,
  /// J constant at j_end_prev, u and both mortars frozen at lambda_prev.
  Constant,
};

Eigen::VectorXd assemble_residual(const DomainState& y, const InterfaceState& y_prev,
                                  const NonlinearityModel& model, const ConditioningVector& z,
                                  const LinearBlocks& blocks);

/// The model-independent part of the Jacobian (the Jacobian for N == 0).
Eigen::MatrixXd constant_jacobian(const LinearBlocks& blocks, Eigen::Index dim);

Eigen::MatrixXd assemble_jacobian(const DomainState& y, const InterfaceState& y_prev,
                                  const NonlinearityModel& model, const ConditioningVector& z,
                                  const LinearBlocks& blocks);

DomainState initial_guess(const InterfaceState& y_prev, const LinearBlocks& blocks,
                          GuessKind kind = GuessKind::Ballistic);

/// Damped Newton with residual-norm backtracking. Converged when
/// |R| <= max(abs_tol, rel_tol |R_0|, roundoff floor of the residual terms).
DomainState newton_solve_domain(const InterfaceState& y_prev, const NonlinearityModel& model,
                                const ConditioningVector& z, const LinearBlocks& blocks,
                                const NewtonSettings& settings, const DomainState& guess,
                                NewtonReport* report = nullptr);

/// (J_M, lambda_out), the selector P^T.
InterfaceState restrict(const DomainState& y);

struct RolloutStats {
  std::vector<NewtonReport> domains;
  int total_iterations() const;
  int max_iterations() const;
};

/// Solves n_domains domains in order starting from y0. A failing solve is
/// rethrown with its domain index.
Rollout rollout(const InterfaceState& y0, std::size_t n_domains, const NonlinearityModel& model,
                const ConditioningVector& z, const LinearBlocks& blocks, const NewtonSettings& settings = {},
                RolloutStats* stats = nullptr, GuessKind guess = GuessKind::Ballistic);

}  // namespace hmti
