#include "hmti/euler_baseline.hpp"

#include <algorithm>

#include "hmti/errors.hpp"

namespace hmti {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Point {
  DgP0Field u;
  P1Field j;
};

Point as_cell(const VectorXd& u, const VectorXd& v) {
  return {DgP0Field(u.transpose()), P1Field(v.transpose().replicate(2, 1))};
}

}  // namespace

VectorXd pointwise_model(const NonlinearityModel& model, const VectorXd& u, const VectorXd& v,
                         const ConditioningVector& z, MatrixXd* d_u, MatrixXd* d_v) {
  const Point p = as_cell(u, v);
  const VectorXd n = model.evaluate(p.u, p.j, z).values.row(0).transpose();
  if (d_u || d_v) {
    // With one cell, flattened indices are: cell (0, c) -> c, node (n, c) -> 2c + n.
    const ModelPartials part = model.partials(p.u, p.j, z);
    const Index d = model.state_dim();
    if (d_u) *d_u = part.d_u;
    if (d_v) {
      d_v->resize(d, d);
      for (Index c = 0; c < d; ++c) d_v->col(c) = part.d_j.col(2 * c) + part.d_j.col(2 * c + 1);
    }
  }
  return n;
}

std::vector<EulerPoint> euler_rollout(const NonlinearityModel& model, const ConditioningVector& z, const VectorXd& u0,
                                      const VectorXd& v0, double delta_t, std::size_t n_steps) {
  std::vector<EulerPoint> out;
  out.reserve(n_steps + 1);
  out.push_back({u0, v0});
  for (std::size_t s = 0; s < n_steps; ++s) {
    const EulerPoint& p = out.back();
    const VectorXd a = pointwise_model(model, p.u, p.v, z);
    out.push_back({p.u + delta_t * p.v, p.v + delta_t * a});
    if (!out.back().u.allFinite() || !out.back().v.allFinite()) {
      throw NonFiniteError("explicit Euler blew up at step " + std::to_string(s + 1));
    }
  }
  return out;
}

std::vector<GradientNormPoint> euler_gradient_norm_sweep(const NonlinearityModel& model, const ConditioningVector& z,
                                                         const VectorXd& u0, const VectorXd& v0, double delta_t,
                                                         const std::vector<std::size_t>& n_list) {
  if (n_list.empty()) return {};
  const std::size_t n_max = *std::max_element(n_list.begin(), n_list.end());
  const Index d = model.state_dim(), np = model.num_params();
  VectorXd u = u0, v = v0;
  MatrixXd su = MatrixXd::Zero(d, np), sv = MatrixXd::Zero(d, np);
  std::vector<GradientNormPoint> out(n_list.size());
  for (std::size_t s = 1; s <= n_max; ++s) {
    MatrixXd du, dv;
    const VectorXd a = pointwise_model(model, u, v, z, &du, &dv);
    MatrixXd da_dtheta(d, np);
    const Point p = as_cell(u, v);
    for (Index c = 0; c < d && np > 0; ++c) {
      DgP0Field cot = DgP0Field::Zero(1, d);
      cot.values(0, c) = 1.0;
      da_dtheta.row(c) = model.theta_vjp(p.u, p.j, z, cot).transpose();
    }
    const MatrixXd su_next = su + delta_t * sv;
    const MatrixXd sv_next = sv + delta_t * (du * su + dv * sv + da_dtheta);
    u += delta_t * v;
    v += delta_t * a;
    su = su_next;
    sv = sv_next;
    if (!u.allFinite() || !v.allFinite() || !su.allFinite() || !sv.allFinite()) {
      throw NonFiniteError("explicit Euler sensitivity blew up at step " + std::to_string(s));
    }
    for (std::size_t k = 0; k < n_list.size(); ++k) {
      if (n_list[k] == s) {
        MatrixXd stacked(2 * d, np);
        stacked << sv, su;
        out[k] = {s, spectral_norm(stacked)};
      }
    }
  }
  return out;
}

}  // namespace hmti
