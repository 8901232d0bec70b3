#include "hmti/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hmti/errors.hpp"
#include "hmti/mortar.hpp"
#include "hmti/transformer.hpp"

namespace hmti {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double kinetic(const Eigen::Ref<const Eigen::RowVectorXd>& j) { return 0.5 * j.squaredNorm(); }

// sum_k V'(u_k) . increments_k
double work(const DomainState& s, const MatrixXd& increments, const Potential& potential) {
  double w = 0.0;
  for (Index k = 0; k < s.u.cells(); ++k) {
    w += potential.gradient(s.u.values.row(k).transpose()).dot(increments.row(k).transpose());
  }
  return w;
}

MatrixXd primitive_increments(const DomainState& s, double h) {
  const Index m = s.u.cells();
  return 0.5 * h * (s.j.values.topRows(m) + s.j.values.bottomRows(m));
}

}  // namespace

double discrete_energy_delta(const DomainState& state, const Potential& potential, double h) {
  const Index m = state.m_cells();
  return kinetic(state.j.values.row(m)) - kinetic(state.j.values.row(0)) -
         work(state, primitive_increments(state, h), potential);
}

double discrete_energy_delta_cell_difference(const DomainState& state, const VectorXd& next_lambda_in,
                                             const Potential& potential) {
  const Index m = state.m_cells();
  if (next_lambda_in.size() != state.dim()) throw ShapeError("energy: next_lambda_in has wrong size");
  MatrixXd inc(m, state.dim());
  for (Index k = 0; k + 1 < m; ++k) inc.row(k) = state.u.values.row(k + 1) - state.u.values.row(k);
  inc.row(m - 1) = next_lambda_in.transpose() - state.u.values.row(m - 1);
  return kinetic(state.j.values.row(m)) - kinetic(state.j.values.row(0)) - work(state, inc, potential);
}

EnergyReport energy_report(const Rollout& states, const Potential& potential, double h) {
  EnergyReport r;
  if (states.empty()) return r;
  const std::size_t n = states.size();
  r.per_domain.reserve(n);
  double running_work = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const DomainState& s = states[i];
    const double de = discrete_energy_delta(s, potential, h);
    r.per_domain.push_back(de);
    r.total += de;
    r.stieltjes_energy.push_back(kinetic(s.j.values.row(0)) - running_work);
    running_work += work(s, primitive_increments(s, h), potential);
    r.hamiltonian.push_back(kinetic(s.j.values.row(0)) - potential.value(s.mortars.lambda_in));

    const VectorXd next = i + 1 < n ? states[i + 1].mortars.lambda_in : s.mortars.lambda_out;
    const double dc = discrete_energy_delta_cell_difference(s, next, potential);
    r.per_domain_cell_difference.push_back(dc);
    r.total_cell_difference += dc;
  }
  const DomainState& last = states.back();
  const Index m = last.m_cells();
  r.stieltjes_energy.push_back(kinetic(last.j.values.row(m)) - running_work);
  r.hamiltonian.push_back(kinetic(last.j.values.row(m)) - potential.value(last.mortars.lambda_out));
  r.kinetic_endpoints = {kinetic(states.front().j.values.row(0)), kinetic(last.j.values.row(m))};
  return r;
}

double EnergyReport::max_abs_delta() const {
  double v = 0.0;
  for (double x : per_domain) v = std::max(v, std::abs(x));
  return v;
}

double EnergyReport::max_delta() const {
  return per_domain.empty() ? 0.0 : *std::max_element(per_domain.begin(), per_domain.end());
}

namespace {
double drift(const std::vector<double>& series) {
  double v = 0.0;
  for (double x : series) v = std::max(v, std::abs(x - series.front()));
  return v;
}
}  // namespace

double EnergyReport::stieltjes_drift() const { return stieltjes_energy.empty() ? 0.0 : drift(stieltjes_energy); }
double EnergyReport::hamiltonian_drift() const { return hamiltonian.empty() ? 0.0 : drift(hamiltonian); }

nlohmann::json EnergyReport::to_json(bool include_series) const {
  nlohmann::json j = {{"n_domains", per_domain.size()},
                      {"total", total},
                      {"max_abs_delta", max_abs_delta()},
                      {"max_delta", max_delta()},
                      {"kinetic_endpoints", {kinetic_endpoints.first, kinetic_endpoints.second}},
                      {"stieltjes_drift", stieltjes_drift()},
                      {"hamiltonian_drift", hamiltonian_drift()},
                      {"total_cell_difference", total_cell_difference}};
  if (include_series) {
    j["per_domain"] = per_domain;
    j["stieltjes_energy"] = stieltjes_energy;
    j["hamiltonian"] = hamiltonian;
    j["per_domain_cell_difference"] = per_domain_cell_difference;
  }
  return j;
}

MatrixXd explicit_j_inverse(std::size_t m_cells, double h, InverseForm form) {
  if (m_cells == 0 || !(h > 0.0)) throw ConfigError("explicit_j_inverse: need m > 0, h > 0");
  const auto m = static_cast<Index>(m_cells);
  const UnknownLayout lay{m, 1};
  const Index u0 = lay.u(0, 0), jc = lay.lambda_out(0), lc = lay.lambda_in(0);
  const double offset = form == InverseForm::Printed ? h / 6.0 : h / 2.0;
  const double corner = form == InverseForm::Printed ? 1.0 + 2.0 * h / 3.0 : static_cast<double>(m) * h;

  MatrixXd inv = MatrixXd::Zero(lay.size(), lay.size());
  // J rows: [0, L1, 1, 0]
  for (Index r = 0; r <= m; ++r) {
    for (Index c = 0; c < r; ++c) inv(r, u0 + c) = 1.0;
    inv(r, jc) = 1.0;
  }
  // u rows: [L2, L3, h1, 1]
  for (Index r = 0; r < m; ++r) {
    for (Index c = 0; c <= r; ++c) inv(u0 + r, c) = -1.0;
    inv(u0 + r, u0 + r) = h / 6.0;
    for (Index c = 0; c < r; ++c) inv(u0 + r, u0 + c) = static_cast<double>(r - c) * h;
    inv(u0 + r, jc) = h * static_cast<double>(r + 1) - offset;
    inv(u0 + r, lc) = 1.0;
  }
  // lambda_out row: [-1^T, h2^T, corner, 1]
  for (Index c = 0; c <= m; ++c) inv(jc, c) = -1.0;
  for (Index c = 0; c < m; ++c) inv(jc, u0 + c) = h * static_cast<double>(m - c) - offset;
  inv(jc, jc) = corner;
  inv(jc, lc) = 1.0;
  // lambda_in row: [0^T, 0^T, 0, 1]
  inv(lc, lc) = 1.0;
  return inv;
}

double check_j_inverse(const LinearBlocks& blocks, InverseForm form) {
  const MatrixXd jac = constant_jacobian(blocks, 1);
  const MatrixXd inv = explicit_j_inverse(blocks.m_cells, blocks.h, form);
  return (jac * inv - MatrixXd::Identity(jac.rows(), jac.cols())).cwiseAbs().maxCoeff();
}

double check_j_inverse(std::size_t m_cells, double h, InverseForm form) {
  return check_j_inverse(assemble_blocks(m_cells, h), form);
}

Eigen::Matrix2d explicit_pt_jinv_q(std::size_t m_cells, double h, InverseForm form) {
  const MatrixXd inv = explicit_j_inverse(m_cells, h, form);
  const UnknownLayout lay{static_cast<Index>(m_cells), 1};
  const Index rows[2] = {lay.j(0, lay.m), lay.lambda_out(0)};
  const Index cols[2] = {lay.lambda_out(0), lay.lambda_in(0)};
  Eigen::Matrix2d out;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) out(a, b) = inv(rows[a], cols[b]);
  }
  return out;
}

std::vector<SbpCase> sbp_suite(const SbpSuiteSettings& settings) {
  std::mt19937_64 rng(settings.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::vector<SbpCase> out;
  out.reserve(settings.cases);
  for (std::size_t c = 0; c < settings.cases; ++c) {
    SbpCase sc;
    sc.n_domains = pick(1, settings.max_domains);
    sc.m_cells = pick(1, settings.max_cells);
    sc.delta_t = 0.05 + 0.45 * (unit(rng) + 1.0) / 2.0;
    std::unique_ptr<NonlinearityModel> model;
    switch (c % 4) {
      case 0:
        model = std::make_unique<HamiltonianModel>(HamiltonianModel::Kind::Quadratic, 0.5 + 2.0 * std::abs(unit(rng)));
        break;
      case 1:
        model = std::make_unique<HamiltonianModel>(HamiltonianModel::Kind::Pendulum, 0.5 + 2.0 * std::abs(unit(rng)));
        break;
      case 2:
        model = std::make_unique<DissipativeModel>(1.0 + std::abs(unit(rng)), std::abs(unit(rng)));
        break;
      default: {
        LocalTransformerConfig cfg;
        cfg.model_dim = 8;
        cfg.mlp_hidden = 16;
        cfg.state_dim = 1 + static_cast<Index>(pick(0, 1));
        cfg.init_seed = rng();
        auto tr = std::make_unique<LocalTransformer>(cfg);
        VectorXd theta = tr->params();
        for (Index k = 0; k < theta.size(); ++k) theta(k) += 0.2 * unit(rng);
        tr->set_params(theta);
        model = std::move(tr);
      }
    }
    sc.model = model->kind();
    sc.dim = model->state_dim();
    const TimeMesh mesh(sc.n_domains, sc.m_cells, sc.delta_t);
    const LinearBlocks blocks = assemble_blocks(mesh);
    VectorXd u0(sc.dim), v0(sc.dim);
    for (Index k = 0; k < sc.dim; ++k) {
      u0(k) = unit(rng);
      v0(k) = unit(rng);
    }
    const ConditioningVector z;
    const Rollout states = rollout(InterfaceState::FromInitialCondition(u0, v0), sc.n_domains, *model, z, blocks);
    MatrixXd v(static_cast<Index>(sc.n_domains * sc.m_cells + 1), sc.dim);
    for (Index r = 0; r < v.rows(); ++r) {
      for (Index k = 0; k < sc.dim; ++k) v(r, k) = unit(rng);
    }
    sc.residual = sbp_residual(states, v, mesh);
    sc.pass = std::abs(sc.residual) < settings.tolerance;
    out.push_back(sc);
  }
  return out;
}

nlohmann::json to_json(const std::vector<SbpCase>& cases) {
  nlohmann::json rows = nlohmann::json::array();
  double worst = 0.0;
  bool all = true;
  for (const auto& c : cases) {
    rows.push_back({{"n_domains", c.n_domains},
                    {"m_cells", c.m_cells},
                    {"delta_t", c.delta_t},
                    {"dim", c.dim},
                    {"model", c.model},
                    {"residual", c.residual},
                    {"pass", c.pass}});
    worst = std::max(worst, std::abs(c.residual));
    all = all && c.pass;
  }
  return {{"cases", rows}, {"max_abs_residual", worst}, {"pass", all}};
}

double partials_sup_norm(const NonlinearityModel& model, const ConditioningVector& z, std::size_t m_cells,
                         double radius, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-radius, radius);
  const auto m = static_cast<Index>(m_cells);
  const Index d = model.state_dim();
  double sup = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    DgP0Field u = DgP0Field::Zero(m, d);
    P1Field j = P1Field::Zero(m + 1, d);
    for (Index k = 0; k < u.values.size(); ++k) u.values.data()[k] = dist(rng);
    for (Index k = 0; k < j.values.size(); ++k) j.values.data()[k] = dist(rng);
    const ModelPartials p = model.partials(u, j, z);
    const VectorXd rows = p.d_u.cwiseAbs().rowwise().sum() + p.d_j.cwiseAbs().rowwise().sum();
    if (rows.size() > 0) sup = std::max(sup, rows.maxCoeff());
  }
  return sup;
}

}  // namespace hmti
