#include "hmti/feec.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "hmti/errors.hpp"
#include "hmti/state.hpp"

namespace hmti {

TimeMesh::TimeMesh(std::size_t n_domains, std::size_t m_cells, double delta_t, double t0)
    : n_domains_(n_domains), m_cells_(m_cells), delta_t_(delta_t), t0_(t0) {
  if (n_domains == 0 || m_cells == 0) throw ConfigError("TimeMesh: counts must be positive");
  if (!(delta_t > 0.0) || !std::isfinite(delta_t)) throw ConfigError("TimeMesh: delta_t must be positive");
  if (!std::isfinite(t0)) throw ConfigError("TimeMesh: t0 must be finite");
  h_ = delta_t_ / static_cast<double>(m_cells_);
}

double TimeMesh::node_time(std::size_t domain, std::size_t k) const {
  return t0_ + static_cast<double>(domain) * delta_t_ + static_cast<double>(k) * h_;
}

double TimeMesh::cell_midpoint(std::size_t domain, std::size_t k) const {
  return t0_ + static_cast<double>(domain) * delta_t_ + (static_cast<double>(k) + 0.5) * h_;
}

LinearBlocks assemble_blocks(const TimeMesh& mesh) { return assemble_blocks(mesh.m_cells(), mesh.h()); }

LinearBlocks assemble_blocks(std::size_t m_cells, double h) {
  if (m_cells == 0 || !(h > 0.0)) throw ConfigError("assemble_blocks: need m_cells > 0 and h > 0");
  const auto m = static_cast<Eigen::Index>(m_cells);
  LinearBlocks b;
  b.m_cells = m_cells;
  b.h = h;
  b.mass_v = Eigen::MatrixXd::Zero(m + 1, m + 1);
  b.mass_q = h * Eigen::MatrixXd::Identity(m, m);
  b.incidence = Eigen::MatrixXd::Zero(m, m + 1);
  b.strong_deriv = Eigen::MatrixXd::Zero(m, m + 1);
  b.proj_v_to_q = Eigen::MatrixXd::Zero(m, m + 1);
  for (Eigen::Index k = 0; k < m; ++k) {
    // int phi_a phi_b over one cell: h/3 on the diagonal, h/6 off it.
    b.mass_v(k, k) += h / 3.0;
    b.mass_v(k + 1, k + 1) += h / 3.0;
    b.mass_v(k, k + 1) += h / 6.0;
    b.mass_v(k + 1, k) += h / 6.0;
    b.incidence(k, k) = -1.0;
    b.incidence(k, k + 1) = 1.0;
    b.strong_deriv(k, k) = -1.0 / h;
    b.strong_deriv(k, k + 1) = 1.0 / h;
    b.proj_v_to_q(k, k) = 0.5;
    b.proj_v_to_q(k, k + 1) = 0.5;
  }
  b.e_first = Eigen::VectorXd::Unit(m + 1, 0);
  b.e_last = Eigen::VectorXd::Unit(m + 1, m);
  return b;
}

namespace {

void require_nodes(const P1Field& j, const LinearBlocks& blocks, const char* who) {
  if (j.nodes() != static_cast<Eigen::Index>(blocks.m_cells) + 1) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(blocks.m_cells + 1) +
                     " nodal rows, got " + std::to_string(j.nodes()));
  }
}

}  // namespace

DgP0Field strong_derivative(const P1Field& j, const LinearBlocks& blocks) {
  require_nodes(j, blocks, "strong_derivative");
  const auto m = j.cells();
  // Difference first, then divide, so affine data is reproduced exactly.
  Eigen::MatrixXd out = (j.values.bottomRows(m) - j.values.topRows(m)) / blocks.h;
  return DgP0Field(std::move(out));
}

DgP0Field project_v_to_q(const P1Field& j, const LinearBlocks& blocks) {
  require_nodes(j, blocks, "project_v_to_q");
  const auto m = j.cells();
  return DgP0Field(0.5 * (j.values.topRows(m) + j.values.bottomRows(m)));
}

DgP0Field cell_integrals(const P1Field& j, const LinearBlocks& blocks) {
  require_nodes(j, blocks, "cell_integrals");
  const auto m = j.cells();
  return DgP0Field((0.5 * blocks.h) * (j.values.topRows(m) + j.values.bottomRows(m)));
}

Eigen::MatrixXd assemble_hodge_laplacian(const LinearBlocks& blocks) {
  Eigen::LLT<Eigen::MatrixXd> llt(blocks.mass_v);
  if (llt.info() != Eigen::Success) throw SingularJacobian("assemble_hodge_laplacian: M_V is not SPD");
  const Eigen::MatrixXd minv_dt = llt.solve(blocks.incidence.transpose());
  Eigen::MatrixXd lap = blocks.incidence * minv_dt;
  return 0.5 * (lap + lap.transpose());
}

double smallest_poincare_eigenvalue(const LinearBlocks& blocks) {
  const Eigen::MatrixXd lap = assemble_hodge_laplacian(blocks);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(lap, blocks.mass_q, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("smallest_poincare_eigenvalue: eigensolver failed");
  return es.eigenvalues().minCoeff();
}

double sbp_residual(const std::vector<DomainState>& states, const Eigen::MatrixXd& v, const TimeMesh& mesh) {
  if (states.empty()) return 0.0;
  const auto m = static_cast<Eigen::Index>(mesh.m_cells());
  const auto n = static_cast<Eigen::Index>(states.size());
  const auto d = states.front().dim();
  if (states.size() != mesh.n_domains()) throw ShapeError("sbp_residual: rollout length differs from the mesh");
  if (v.rows() != n * m + 1 || v.cols() != d) {
    throw ShapeError("sbp_residual: test function must have N*M+1 rows and one column per component");
  }
  const double h = mesh.h();
  double lhs = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const DomainState& s = states[static_cast<std::size_t>(i)];
    if (s.m_cells() != m || s.dim() != d || s.j.nodes() != m + 1) {
      throw ShapeError("sbp_residual: state " + std::to_string(i) + " is inconsistent with the mesh");
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      for (Eigen::Index k = 0; k < m; ++k) {
        const double ja = s.j.values(k, c), jb = s.j.values(k + 1, c);
        const double va = v(i * m + k, c), vb = v(i * m + k + 1, c);
        // Exact integral of the product of two linear functions on one cell.
        const double jv = h * (2.0 * ja * va + ja * vb + jb * va + 2.0 * jb * vb) / 6.0;
        lhs += jv + s.u.values(k, c) * (vb - va);
      }
    }
  }
  double rhs = 0.0;
  for (Eigen::Index c = 0; c < d; ++c) {
    rhs += states.back().mortars.lambda_out(c) * v(n * m, c) - states.front().mortars.lambda_in(c) * v(0, c);
  }
  return lhs - rhs;
}

}  // namespace hmti
