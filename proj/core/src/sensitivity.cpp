#include "hmti/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "hmti/errors.hpp"

namespace hmti {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

LossKind parse_loss_kind(const std::string& name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "l1") return LossKind::L1;
  throw ConfigError("unknown loss kind '" + name + "' (expected mse or l1)");
}

std::string to_string(LossKind kind) { return kind == LossKind::Mse ? "mse" : "l1"; }

LossResult loss_and_cotangents(const Rollout& states, const LossSpec& spec) {
  if (spec.targets.size() != states.size()) throw ShapeError("loss: number of target domains does not match rollout");
  if (!spec.weights.empty() && spec.weights.size() != states.size()) {
    throw ShapeError("loss: number of weights does not match rollout");
  }
  const bool with_j = spec.j_weight != 0.0;
  if (with_j && spec.j_targets.size() != states.size()) throw ShapeError("loss: J targets do not match rollout");

  Index n_u = 0, n_j = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& u = states[i].u.values;
    if (spec.targets[i].rows() != u.rows() || spec.targets[i].cols() != u.cols()) {
      throw ShapeError("loss: target shape mismatch in domain " + std::to_string(i));
    }
    n_u += u.size();
    if (with_j) {
      const auto& j = states[i].j.values;
      if (spec.j_targets[i].rows() != j.rows() || spec.j_targets[i].cols() != j.cols()) {
        throw ShapeError("loss: J target shape mismatch in domain " + std::to_string(i));
      }
      n_j += j.size();
    }
  }

  LossResult out;
  out.cotangents.resize(states.size());
  if (n_u == 0) return out;
  auto accumulate = [&](const MatrixXd& value, const MatrixXd& target, double scale, MatrixXd& cot) {
    const MatrixXd diff = value - target;
    if (spec.kind == LossKind::Mse) {
      out.value += scale * diff.squaredNorm();
      cot = 2.0 * scale * diff;
    } else {
      out.value += scale * diff.cwiseAbs().sum();
      cot = scale * diff.unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
    }
  };
  for (std::size_t i = 0; i < states.size(); ++i) {
    const double w = spec.weights.empty() ? 1.0 : spec.weights[i];
    accumulate(states[i].u.values, spec.targets[i], w / static_cast<double>(n_u), out.cotangents[i].u);
    if (with_j) {
      accumulate(states[i].j.values, spec.j_targets[i], spec.j_weight * w / static_cast<double>(n_j),
                 out.cotangents[i].j);
    }
  }
  return out;
}

namespace {

Eigen::PartialPivLU<MatrixXd> factor(const MatrixXd& jac, std::ptrdiff_t domain) {
  Eigen::PartialPivLU<MatrixXd> lu(jac);
  if (!(lu.rcond() > 1e3 * std::numeric_limits<double>::epsilon())) {
    throw SingularJacobian("singular domain Jacobian in sensitivity solve", domain);
  }
  return lu;
}

InterfaceState interface_before(const Rollout& states, const InterfaceState& y0, std::size_t i) {
  return i == 0 ? y0 : restrict(states[i - 1]);
}

// Cotangent slice on the u rows of a flattened vector, as a cell field.
DgP0Field u_rows(const VectorXd& w, Index m, Index d, double scale) {
  const UnknownLayout lay{m, d};
  MatrixXd c(m, d);
  for (Index k = 0; k < d; ++k) c.col(k) = scale * w.segment(lay.u(k, 0), m);
  return DgP0Field(std::move(c));
}

}  // namespace

AdjointWorkspace adjoint_sweep(const Rollout& states, const InterfaceState& y0, const NonlinearityModel& model,
                               const ConditioningVector& z, const LinearBlocks& blocks,
                               const std::vector<DomainCotangent>& cotangents, const InterfaceState* terminal) {
  if (cotangents.size() != states.size()) throw ShapeError("backward: one cotangent per domain required");
  const Index m = static_cast<Index>(blocks.m_cells), d = model.state_dim();
  const UnknownLayout lay{m, d};

  AdjointWorkspace ws;
  ws.w.resize(states.size());
  ws.grad_theta = VectorXd::Zero(model.num_params());
  ws.grad_y0 = InterfaceState::Zero(d);

  // Interface cotangent flowing into the domain currently being processed.
  InterfaceState incoming = terminal ? *terminal : InterfaceState::Zero(d);
  if (incoming.dim() != d) throw ShapeError("backward: terminal cotangent dimension mismatch");

  for (std::size_t ii = states.size(); ii-- > 0;) {
    const DomainState& y = states[ii];
    const DomainCotangent& g = cotangents[ii];
    if (g.u.rows() != m || g.u.cols() != d) throw ShapeError("backward: u cotangent shape mismatch");
    VectorXd rhs = VectorXd::Zero(lay.size());
    for (Index c = 0; c < d; ++c) {
      rhs.segment(lay.u(c, 0), m) = g.u.col(c);
      if (g.j.size() > 0) {
        if (g.j.rows() != m + 1 || g.j.cols() != d) throw ShapeError("backward: J cotangent shape mismatch");
        rhs.segment(lay.j(c, 0), m + 1) = g.j.col(c);
      }
      rhs(lay.j(c, m)) += incoming.j_end(c);
      rhs(lay.lambda_out(c)) += incoming.lambda_out(c);
    }
    const MatrixXd jac = assemble_jacobian(y, interface_before(states, y0, ii), model, z, blocks);
    const auto lu = factor(jac, static_cast<std::ptrdiff_t>(ii));
    VectorXd w = lu.transpose().solve(rhs);
    if (!w.allFinite()) throw NonFiniteError("backward: non-finite adjoint solution");

    if (ws.grad_theta.size() > 0) {
      ws.grad_theta += model.theta_vjp(y.u, y.j, z, u_rows(w, m, d, blocks.h));
    }
    // dH_i/dy_{i-1} = -Q, so the cotangent on y_{i-1} is Q^T w.
    for (Index c = 0; c < d; ++c) {
      incoming.j_end(c) = w(lay.lambda_out(c));  // row J_0 - j_end_prev
      incoming.lambda_out(c) = w(lay.lambda_in(c));  // row lambda_in - lambda_prev
    }
    ws.w[ii] = std::move(w);
  }
  ws.grad_y0 = incoming;
  return ws;
}

VectorXd backward(const Rollout& states, const InterfaceState& y0, const NonlinearityModel& model,
                  const ConditioningVector& z, const LinearBlocks& blocks,
                  const std::vector<DomainCotangent>& cotangents) {
  return adjoint_sweep(states, y0, model, z, blocks, cotangents).grad_theta;
}

MatrixXd interface_selector_p(Index m_cells, Index dim) {
  const UnknownLayout lay{m_cells, dim};
  MatrixXd p = MatrixXd::Zero(2 * dim, lay.size());
  for (Index c = 0; c < dim; ++c) {
    p(c, lay.j(c, m_cells)) = 1.0;
    p(dim + c, lay.lambda_out(c)) = 1.0;
  }
  return p;
}

MatrixXd interface_lift_q(Index m_cells, Index dim) {
  const UnknownLayout lay{m_cells, dim};
  MatrixXd q = MatrixXd::Zero(lay.size(), 2 * dim);
  for (Index c = 0; c < dim; ++c) {
    q(lay.lambda_out(c), c) = 1.0;       // J-continuity row
    q(lay.lambda_in(c), dim + c) = 1.0;  // mortar-continuity row
  }
  return q;
}

double spectral_norm(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  const MatrixXd g = a.rows() <= a.cols() ? MatrixXd(a * a.transpose()) : MatrixXd(a.transpose() * a);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(g, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

InterfaceJacobian interface_jacobian(const DomainState& solved, const NonlinearityModel& model,
                                     const ConditioningVector& z, const LinearBlocks& blocks) {
  const Index m = static_cast<Index>(blocks.m_cells), d = model.state_dim();
  const MatrixXd jac = assemble_jacobian(solved, InterfaceState::Zero(d), model, z, blocks);
  const auto lu = factor(jac, -1);
  InterfaceJacobian out;
  // (P^T J^{-1})^T = J^{-T} P
  const MatrixXd p_cols = interface_selector_p(m, d).transpose();
  const MatrixXd jinv_t_p = lu.transpose().solve(p_cols);
  out.pt_jinv = jinv_t_p.transpose();
  out.pt_jinv_q = out.pt_jinv * interface_lift_q(m, d);
  out.norm_pt_jinv = spectral_norm(out.pt_jinv);
  out.norm_pt_jinv_q = spectral_norm(out.pt_jinv_q);
  return out;
}

std::vector<InterfaceJacobian> interface_jacobian_norms(const NonlinearityModel& model, const ConditioningVector& z,
                                                        const LinearBlocks& blocks,
                                                        const std::vector<InterfaceState>& y_samples,
                                                        const NewtonSettings& settings) {
  std::vector<InterfaceJacobian> out;
  out.reserve(y_samples.size());
  for (const auto& y : y_samples) {
    const DomainState solved = newton_solve_domain(y, model, z, blocks, settings, initial_guess(y, blocks));
    out.push_back(interface_jacobian(solved, model, z, blocks));
  }
  return out;
}

std::vector<MatrixXd> interface_sensitivity_forward(const Rollout& states, const NonlinearityModel& model,
                                                    const ConditioningVector& z, const LinearBlocks& blocks,
                                                    const std::vector<std::size_t>& at) {
  const Index m = static_cast<Index>(blocks.m_cells), d = model.state_dim(), np = model.num_params();
  for (std::size_t n : at) {
    if (n == 0 || n > states.size()) throw ConfigError("interface_sensitivity_forward: requested N out of range");
  }
  std::vector<MatrixXd> out(at.size());
  MatrixXd s = MatrixXd::Zero(2 * d, np);
  const MatrixXd q = interface_lift_q(m, d);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const InterfaceJacobian ij = interface_jacobian(states[i], model, z, blocks);
    MatrixXd next = ij.pt_jinv_q * s;
    for (Index r = 0; r < 2 * d && np > 0; ++r) {
      next.row(r) += model.theta_vjp(states[i].u, states[i].j, z, u_rows(ij.pt_jinv.row(r).transpose(), m, d, blocks.h))
                         .transpose();
    }
    s = std::move(next);
    if (!s.allFinite()) throw NonFiniteError("interface sensitivity is not finite");
    for (std::size_t a = 0; a < at.size(); ++a) {
      if (at[a] == i + 1) out[a] = s;
    }
  }
  return out;
}

MatrixXd interface_sensitivity_adjoint(const Rollout& states, const InterfaceState& y0,
                                       const NonlinearityModel& model, const ConditioningVector& z,
                                       const LinearBlocks& blocks) {
  const Index m = static_cast<Index>(blocks.m_cells), d = model.state_dim();
  std::vector<DomainCotangent> zero(states.size(), DomainCotangent{MatrixXd::Zero(m, d), {}});
  MatrixXd out(2 * d, model.num_params());
  for (Index r = 0; r < 2 * d; ++r) {
    InterfaceState e = InterfaceState::Zero(d);
    if (r < d) {
      e.j_end(r) = 1.0;
    } else {
      e.lambda_out(r - d) = 1.0;
    }
    out.row(r) = adjoint_sweep(states, y0, model, z, blocks, zero, &e).grad_theta.transpose();
  }
  return out;
}

std::vector<GradientNormPoint> gradient_norm_sweep(const NonlinearityModel& model, const ConditioningVector& z,
                                                   const LinearBlocks& blocks, const InterfaceState& y0,
                                                   const std::vector<std::size_t>& n_list,
                                                   const NewtonSettings& settings) {
  if (n_list.empty()) return {};
  const std::size_t n_max = *std::max_element(n_list.begin(), n_list.end());
  const Rollout states = rollout(y0, n_max, model, z, blocks, settings);
  const auto sens = interface_sensitivity_forward(states, model, z, blocks, n_list);
  std::vector<GradientNormPoint> out;
  for (std::size_t a = 0; a < n_list.size(); ++a) out.push_back({n_list[a], spectral_norm(sens[a])});
  return out;
}

}  // namespace hmti
