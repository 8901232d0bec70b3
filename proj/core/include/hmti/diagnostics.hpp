#pragma once

// Numerical certificates for solved rollouts: discrete energy balance,
// summation by parts, the explicit inverse of the constant block and a sup
// bound on the model derivatives.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hmti/feec.hpp"
#include "hmti/nonlinearity.hpp"
#include "hmti/state.hpp"

namespace hmti {

/// Energy increment of one solved domain,
///   [|J|^2/2] over the domain - sum_k V'(u_k) . (U_{k+1} - U_k),
/// where U is the nodal primitive of J anchored at lambda_in
/// (U_{k+1} - U_k = integral of J over cell k, U_M = lambda_out).
double discrete_energy_delta(const DomainState& state, const Potential& potential, double h);

/// The same balance with increments taken between consecutive cell values,
/// u_{k+1} - u_k with u_M := lambda_out (the next domain's lambda_in). This
/// variant is not conserved by the scheme; it is reported for comparison.
double discrete_energy_delta_cell_difference(const DomainState& state, const Eigen::VectorXd& next_lambda_in,
                                             const Potential& potential);

struct EnergyReport {
  std::vector<double> per_domain;
  double total = 0.0;
  std::pair<double, double> kinetic_endpoints{0.0, 0.0};  // |J|^2/2 at t_0 and at T
  /// |J|^2/2 minus the running sum of V' dU at every interface. Constant
  /// for conservative models.
  std::vector<double> stieltjes_energy;
  /// |J|^2/2 - V(lambda) at every interface.
  std::vector<double> hamiltonian;
  std::vector<double> per_domain_cell_difference;
  double total_cell_difference = 0.0;

  double max_abs_delta() const;
  double max_delta() const;
  double stieltjes_drift() const;
  double hamiltonian_drift() const;
  nlohmann::json to_json(bool include_series = false) const;
};

EnergyReport energy_report(const Rollout& states, const Potential& potential, double h);

/// Blocks of the closed-form inverse of the constant Jacobian (d = 1).
enum class InverseForm {
  /// Exactly as printed in the literature: h1, h2 offset by h/6 and corner 1 + 2h/3.
  Printed,
  /// Offsets h/2 and corner M h, which is the actual inverse.
  Corrected,
};

Eigen::MatrixXd explicit_j_inverse(std::size_t m_cells, double h, InverseForm form);

/// max |J * J^{-1}_explicit - I| for the N == 0 block.
double check_j_inverse(const LinearBlocks& blocks, InverseForm form = InverseForm::Printed);
double check_j_inverse(std::size_t m_cells, double h, InverseForm form = InverseForm::Printed);

/// P^T J^{-1} Q (2 x 2) read off the explicit inverse.
Eigen::Matrix2d explicit_pt_jinv_q(std::size_t m_cells, double h, InverseForm form);

struct SbpCase {
  std::size_t n_domains = 0;
  std::size_t m_cells = 0;
  double delta_t = 0.0;
  Eigen::Index dim = 1;
  std::string model;
  double residual = 0.0;
  bool pass = false;
};

struct SbpSuiteSettings {
  std::size_t cases = 100;
  std::size_t max_domains = 6;
  std::size_t max_cells = 8;
  double tolerance = 1e-10;
  std::uint64_t seed = 1;
};

/// Random meshes, models and initial conditions; each solved rollout is
/// tested against a random global P1 function.
std::vector<SbpCase> sbp_suite(const SbpSuiteSettings& settings = {});
nlohmann::json to_json(const std::vector<SbpCase>& cases);

/// max over sampled inputs in the ball |u|,|J| <= radius of the infinity norm
/// of [dN/du, dN/dJ].
double partials_sup_norm(const NonlinearityModel& model, const ConditioningVector& z, std::size_t m_cells,
                         double radius, std::size_t samples, std::uint64_t seed);

}  // namespace hmti
