#pragma once

// Lowest-order 1D de Rham complex on one rollout domain: continuous P1 nodal
// fields (J) and discontinuous P0 cell fields (u), their mass matrices, the
// oriented incidence matrix and the derived operators.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace hmti {

/// Uniform partition of [t0, t0 + n_domains * delta_t] into rollout domains of
/// m_cells subintervals each.
class TimeMesh {
 public:
  TimeMesh(std::size_t n_domains, std::size_t m_cells, double delta_t, double t0 = 0.0);

  std::size_t n_domains() const { return n_domains_; }
  std::size_t m_cells() const { return m_cells_; }
  double delta_t() const { return delta_t_; }
  double t0() const { return t0_; }
  double h() const { return h_; }
  double total_span() const { return static_cast<double>(n_domains_) * delta_t_; }

  /// t_{i,k} = t0 + i*delta_t + k*h, k in [0, m_cells].
  double node_time(std::size_t domain, std::size_t k) const;
  double cell_midpoint(std::size_t domain, std::size_t k) const;

 private:
  std::size_t n_domains_;
  std::size_t m_cells_;
  double delta_t_;
  double t0_;
  double h_;
};

/// Piecewise-constant field: row k is the value on cell k, one column per
/// state component.
struct DgP0Field {
  Eigen::MatrixXd values;

  DgP0Field() = default;
  explicit DgP0Field(Eigen::MatrixXd v) : values(std::move(v)) {}
  static DgP0Field Zero(Eigen::Index cells, Eigen::Index dim) {
    return DgP0Field(Eigen::MatrixXd::Zero(cells, dim));
  }
  Eigen::Index cells() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

/// Continuous piecewise-linear field: row k is the nodal value at t_{i,k}.
struct P1Field {
  Eigen::MatrixXd values;

  P1Field() = default;
  explicit P1Field(Eigen::MatrixXd v) : values(std::move(v)) {}
  static P1Field Zero(Eigen::Index nodes, Eigen::Index dim) {
    return P1Field(Eigen::MatrixXd::Zero(nodes, dim));
  }
  Eigen::Index nodes() const { return values.rows(); }
  Eigen::Index cells() const { return values.rows() - 1; }
  Eigen::Index dim() const { return values.cols(); }
};

/// Assembled per-domain matrices. All of them act identically on every state
/// component.
struct LinearBlocks {
  std::size_t m_cells = 0;
  double h = 0.0;
  Eigen::MatrixXd mass_v;        // (M+1)x(M+1), exact hat-function integrals
  Eigen::MatrixXd mass_q;        // MxM, h*I
  Eigen::MatrixXd incidence;     // Mx(M+1), delta
  Eigen::MatrixXd strong_deriv;  // Mx(M+1), D with mass_q * D = delta
  Eigen::MatrixXd proj_v_to_q;   // Mx(M+1), cell averaging
  Eigen::VectorXd e_first;
  Eigen::VectorXd e_last;
};

LinearBlocks assemble_blocks(const TimeMesh& mesh);
LinearBlocks assemble_blocks(std::size_t m_cells, double h);

/// Exact cellwise derivative (J_{k+1} - J_k) / h.
DgP0Field strong_derivative(const P1Field& j, const LinearBlocks& blocks);

/// Cell averages (J_k + J_{k+1}) / 2 of the linear interpolant.
DgP0Field project_v_to_q(const P1Field& j, const LinearBlocks& blocks);

/// delta * M_V^{-1} * delta^T, the MxM mixed Hodge Laplacian on cell fields.
Eigen::MatrixXd assemble_hodge_laplacian(const LinearBlocks& blocks);

/// Smallest eigenvalue mu of L x = mu M_Q x. Its inverse is the discrete
/// Poincare constant.
double smallest_poincare_eigenvalue(const LinearBlocks& blocks);

/// Integrals of J over each cell, i.e. h * (cell average of J).
DgP0Field cell_integrals(const P1Field& j, const LinearBlocks& blocks);

struct DomainState;

/// Residual of the global discrete summation-by-parts identity
///
///   sum_i sum_k [ int_{cell} J v dt + u_{i,k} (v(t_{i,k+1}) - v(t_{i,k})) ]
///     = lambda_{N-1,N} v(T) - lambda_{0,0} v(t_0)
///
/// for a solved rollout and a global P1 test function `v` given by its
/// N*M + 1 nodal values (one column per component, summed). Throws ShapeError on mesh/state inconsistencies.
double sbp_residual(const std::vector<DomainState>& states, const Eigen::MatrixXd& v,
                    const TimeMesh& mesh);

}  // namespace hmti
