#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hmti/feec.hpp"

namespace hmti {

/// Boundary traces of u on one rollout domain.
struct MortarPair {
  Eigen::VectorXd lambda_in;   // lambda_{i,i}
  Eigen::VectorXd lambda_out;  // lambda_{i,i+1}
};

/// Unknowns of one rollout domain. Per component the flattened layout is
/// (J_0..J_M, u_0..u_{M-1}, lambda_out, lambda_in), components stacked one
/// after another.
struct DomainState {
  P1Field j;
  DgP0Field u;
  MortarPair mortars;

  Eigen::Index m_cells() const { return u.cells(); }
  Eigen::Index dim() const { return u.dim(); }

  static DomainState Zero(Eigen::Index m_cells, Eigen::Index dim);

  /// Size of the flattened unknown vector, dim * (2M + 3).
  Eigen::Index flat_size() const { return dim() * (2 * m_cells() + 3); }
  Eigen::VectorXd flatten() const;
  static DomainState unflatten(const Eigen::VectorXd& x, Eigen::Index m_cells, Eigen::Index dim);
};

/// Carrier between consecutive domains: (J at the domain end, outgoing mortar).
struct InterfaceState {
  Eigen::VectorXd j_end;
  Eigen::VectorXd lambda_out;

  Eigen::Index dim() const { return j_end.size(); }
  static InterfaceState Zero(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
  }
  /// Initial conditions u(t0) = u0, u'(t0) = v0.
  static InterfaceState FromInitialCondition(const Eigen::VectorXd& u0, const Eigen::VectorXd& v0) {
    return {v0, u0};
  }
};

using Rollout = std::vector<DomainState>;

/// Offsets into the per-component block of the flattened unknown vector.
struct UnknownLayout {
  Eigen::Index m = 0;
  Eigen::Index dim = 1;

  Eigen::Index block() const { return 2 * m + 3; }
  Eigen::Index size() const { return dim * block(); }
  Eigen::Index j(Eigen::Index comp, Eigen::Index node) const { return comp * block() + node; }
  Eigen::Index u(Eigen::Index comp, Eigen::Index cell) const { return comp * block() + m + 1 + cell; }
  Eigen::Index lambda_out(Eigen::Index comp) const { return comp * block() + 2 * m + 1; }
  Eigen::Index lambda_in(Eigen::Index comp) const { return comp * block() + 2 * m + 2; }
};

}  // namespace hmti
