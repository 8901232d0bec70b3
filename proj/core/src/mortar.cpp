#include "hmti/mortar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/LU>

#include "hmti/errors.hpp"

namespace hmti {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

DomainState DomainState::Zero(Index m_cells, Index dim) {
  return {P1Field::Zero(m_cells + 1, dim), DgP0Field::Zero(m_cells, dim),
          {VectorXd::Zero(dim), VectorXd::Zero(dim)}};
}

VectorXd DomainState::flatten() const {
  const UnknownLayout lay{m_cells(), dim()};
  VectorXd x(lay.size());
  for (Index c = 0; c < lay.dim; ++c) {
    x.segment(lay.j(c, 0), lay.m + 1) = j.values.col(c);
    x.segment(lay.u(c, 0), lay.m) = u.values.col(c);
    x(lay.lambda_out(c)) = mortars.lambda_out(c);
    x(lay.lambda_in(c)) = mortars.lambda_in(c);
  }
  return x;
}

DomainState DomainState::unflatten(const VectorXd& x, Index m_cells, Index dim) {
  const UnknownLayout lay{m_cells, dim};
  if (x.size() != lay.size()) throw ShapeError("DomainState::unflatten: wrong vector length");
  DomainState s = Zero(m_cells, dim);
  for (Index c = 0; c < dim; ++c) {
    s.j.values.col(c) = x.segment(lay.j(c, 0), m_cells + 1);
    s.u.values.col(c) = x.segment(lay.u(c, 0), m_cells);
    s.mortars.lambda_out(c) = x(lay.lambda_out(c));
    s.mortars.lambda_in(c) = x(lay.lambda_in(c));
  }
  return s;
}

void NewtonSettings::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw ConfigError("NewtonSettings: tolerances must be positive");
  if (max_iters < 1 || damping_halvings < 0) throw ConfigError("NewtonSettings: invalid iteration budget");
}

int RolloutStats::total_iterations() const {
  int n = 0;
  for (const auto& r : domains) n += r.iterations;
  return n;
}

int RolloutStats::max_iterations() const {
  int n = 0;
  for (const auto& r : domains) n = std::max(n, r.iterations);
  return n;
}

namespace {

void check_shapes(const DomainState& y, const InterfaceState& y_prev, const NonlinearityModel& model,
                  const LinearBlocks& blocks) {
  const auto m = static_cast<Index>(blocks.m_cells);
  const Index d = model.state_dim();
  if (y.u.cells() != m || y.j.nodes() != m + 1 || y.u.dim() != d || y.j.dim() != d ||
      y.mortars.lambda_in.size() != d || y.mortars.lambda_out.size() != d) {
    throw ShapeError("domain state does not match mesh/model");
  }
  if (y_prev.j_end.size() != d || y_prev.lambda_out.size() != d) {
    throw ShapeError("interface state does not match model dimension");
  }
}

// Residual plus a magnitude estimate of the terms it sums (for the roundoff floor).
VectorXd residual_impl(const DomainState& y, const InterfaceState& y_prev, const DgP0Field& n,
                       const LinearBlocks& blocks, double* scale) {
  const Index m = static_cast<Index>(blocks.m_cells), d = y.dim();
  const UnknownLayout lay{m, d};
  VectorXd r(lay.size());
  double s = 0.0;
  for (Index c = 0; c < d; ++c) {
    const auto jc = y.j.values.col(c);
    const auto uc = y.u.values.col(c);
    VectorXd top = blocks.mass_v * jc + blocks.incidence.transpose() * uc;
    top(m) -= y.mortars.lambda_out(c);
    top(0) += y.mortars.lambda_in(c);
    r.segment(lay.j(c, 0), m + 1) = top;
    r.segment(lay.u(c, 0), m) = blocks.incidence * jc - blocks.h * n.values.col(c);
    r(lay.lambda_out(c)) = y.j.values(0, c) - y_prev.j_end(c);
    r(lay.lambda_in(c)) = y.mortars.lambda_in(c) - y_prev.lambda_out(c);
    if (scale) {
      s = std::max({s, jc.cwiseAbs().maxCoeff(), uc.cwiseAbs().maxCoeff(),
                    std::abs(y.mortars.lambda_in(c)), std::abs(y.mortars.lambda_out(c)),
                    std::abs(y_prev.j_end(c)), std::abs(y_prev.lambda_out(c)),
                    blocks.h * n.values.col(c).cwiseAbs().maxCoeff()});
    }
  }
  if (scale) *scale = s;
  if (!r.allFinite()) throw NonFiniteError("residual is not finite");
  return r;
}

MatrixXd jacobian_from_partials(const ModelPartials& p, const LinearBlocks& blocks, Index d) {
  const Index m = static_cast<Index>(blocks.m_cells);
  const UnknownLayout lay{m, d};
  MatrixXd jac = constant_jacobian(blocks, d);
  for (Index c = 0; c < d; ++c) {
    for (Index k = 0; k < m; ++k) {
      const Index row = lay.u(c, k), pr = c * m + k;
      for (Index c2 = 0; c2 < d; ++c2) {
        for (Index k2 = 0; k2 < m; ++k2) jac(row, lay.u(c2, k2)) -= blocks.h * p.d_u(pr, c2 * m + k2);
        for (Index n2 = 0; n2 <= m; ++n2) jac(row, lay.j(c2, n2)) -= blocks.h * p.d_j(pr, c2 * (m + 1) + n2);
      }
    }
  }
  return jac;
}

}  // namespace

VectorXd assemble_residual(const DomainState& y, const InterfaceState& y_prev, const NonlinearityModel& model,
                           const ConditioningVector& z, const LinearBlocks& blocks) {
  check_shapes(y, y_prev, model, blocks);
  const DgP0Field n = model.evaluate(y.u, y.j, z);
  if (!n.values.allFinite()) throw NonFiniteError("model output is not finite");
  return residual_impl(y, y_prev, n, blocks, nullptr);
}

MatrixXd constant_jacobian(const LinearBlocks& blocks, Index dim) {
  const Index m = static_cast<Index>(blocks.m_cells);
  const UnknownLayout lay{m, dim};
  MatrixXd jac = MatrixXd::Zero(lay.size(), lay.size());
  for (Index c = 0; c < dim; ++c) {
    const Index j0 = lay.j(c, 0), u0 = lay.u(c, 0);
    jac.block(j0, j0, m + 1, m + 1) = blocks.mass_v;
    jac.block(j0, u0, m + 1, m) = blocks.incidence.transpose();
    jac(lay.j(c, m), lay.lambda_out(c)) = -1.0;
    jac(lay.j(c, 0), lay.lambda_in(c)) = 1.0;
    jac.block(u0, j0, m, m + 1) = blocks.incidence;
    jac(lay.lambda_out(c), lay.j(c, 0)) = 1.0;
    jac(lay.lambda_in(c), lay.lambda_in(c)) = 1.0;
  }
  return jac;
}

MatrixXd assemble_jacobian(const DomainState& y, const InterfaceState& y_prev, const NonlinearityModel& model,
                           const ConditioningVector& z, const LinearBlocks& blocks) {
  check_shapes(y, y_prev, model, blocks);
  return jacobian_from_partials(model.partials(y.u, y.j, z), blocks, model.state_dim());
}

DomainState initial_guess(const InterfaceState& y_prev, const LinearBlocks& blocks, GuessKind kind) {
  const Index m = static_cast<Index>(blocks.m_cells), d = y_prev.dim();
  DomainState g = DomainState::Zero(m, d);
  g.j.values = y_prev.j_end.transpose().replicate(m + 1, 1);
  g.mortars.lambda_in = y_prev.lambda_out;
  if (kind == GuessKind::Constant) {
    g.u.values = y_prev.lambda_out.transpose().replicate(m, 1);
    g.mortars.lambda_out = y_prev.lambda_out;
  } else {
    for (Index k = 0; k < m; ++k) {
      g.u.values.row(k) = (y_prev.lambda_out + (static_cast<double>(k) + 0.5) * blocks.h * y_prev.j_end).transpose();
    }
    g.mortars.lambda_out = y_prev.lambda_out + static_cast<double>(m) * blocks.h * y_prev.j_end;
  }
  return g;
}

DomainState newton_solve_domain(const InterfaceState& y_prev, const NonlinearityModel& model,
                                const ConditioningVector& z, const LinearBlocks& blocks,
                                const NewtonSettings& settings, const DomainState& guess, NewtonReport* report) {
  settings.validate();
  check_shapes(guess, y_prev, model, blocks);
  if (!y_prev.j_end.allFinite() || !y_prev.lambda_out.allFinite()) {
    throw NonFiniteError("newton_solve_domain: non-finite interface state");
  }
  const Index m = static_cast<Index>(blocks.m_cells), d = model.state_dim();
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  DomainState y = guess;
  double scale = 0.0;
  auto eval = [&](const DomainState& s, double* sc) {
    return residual_impl(s, y_prev, model.evaluate(s.u, s.j, z), blocks, sc);
  };
  VectorXd r = eval(y, &scale);
  double rnorm = r.norm();
  const double r0 = rnorm;
  const double size_factor = std::sqrt(static_cast<double>(r.size()));
  auto tolerance = [&](double sc) {
    return std::max({settings.abs_tol, settings.rel_tol * r0, 16.0 * kEps * size_factor * sc});
  };

  int it = 0;
  while (rnorm > tolerance(scale)) {
    if (it >= settings.max_iters) {
      throw NonConvergence("Newton iteration budget exhausted (residual " + std::to_string(rnorm) + ")", rnorm, it);
    }
    const MatrixXd jac = jacobian_from_partials(model.partials(y.u, y.j, z), blocks, d);
    const Eigen::PartialPivLU<MatrixXd> lu(jac);
    const double rcond = lu.rcond();
    if (!(rcond > 1e3 * kEps)) {
      throw SingularJacobian("domain Jacobian is singular (rcond " + std::to_string(rcond) + ")");
    }
    const VectorXd dx = lu.solve(-r);
    const VectorXd x = y.flatten();
    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k <= settings.damping_halvings; ++k, step *= 0.5) {
      DomainState trial = DomainState::unflatten(x + step * dx, m, d);
      double trial_scale = 0.0;
      VectorXd trial_r;
      try {
        trial_r = eval(trial, &trial_scale);
      } catch (const NonFiniteError&) {
        continue;
      }
      const double trial_norm = trial_r.norm();
      if (trial_norm < rnorm || trial_norm <= tolerance(trial_scale)) {
        y = std::move(trial);
        r = std::move(trial_r);
        rnorm = trial_norm;
        scale = trial_scale;
        accepted = true;
        break;
      }
    }
    ++it;
    if (!accepted) {
      throw NonConvergence("line search failed to reduce the residual (" + std::to_string(rnorm) + ")", rnorm, it);
    }
  }
  if (report) *report = {it, r0, rnorm, tolerance(scale)};
  return y;
}

InterfaceState restrict(const DomainState& y) {
  const Index m = y.m_cells();
  return {y.j.values.row(m).transpose(), y.mortars.lambda_out};
}

Rollout rollout(const InterfaceState& y0, std::size_t n_domains, const NonlinearityModel& model,
                const ConditioningVector& z, const LinearBlocks& blocks, const NewtonSettings& settings,
                RolloutStats* stats, GuessKind guess) {
  if (!y0.j_end.allFinite() || !y0.lambda_out.allFinite()) throw NonFiniteError("rollout: non-finite initial state");
  if (y0.dim() != model.state_dim()) throw ShapeError("rollout: initial state does not match model dimension");
  Rollout out;
  out.reserve(n_domains);
  if (stats) stats->domains.clear();
  InterfaceState y = y0;
  for (std::size_t i = 0; i < n_domains; ++i) {
    NewtonReport rep;
    const auto idx = static_cast<std::ptrdiff_t>(i);
    try {
      out.push_back(newton_solve_domain(y, model, z, blocks, settings, initial_guess(y, blocks, guess), &rep));
    } catch (const NonConvergence& e) {
      throw NonConvergence("domain " + std::to_string(i) + ": " + e.what(), e.residual_norm(), e.iterations(), idx);
    } catch (const SingularJacobian& e) {
      throw SingularJacobian("domain " + std::to_string(i) + ": " + e.what(), idx);
    }
    if (stats) stats->domains.push_back(rep);
    y = restrict(out.back());
  }
  return out;
}

}  // namespace hmti
