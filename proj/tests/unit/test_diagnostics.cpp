#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hmti;
using hmti::testing::vec;

namespace {

Rollout oscillator_rollout(const NonlinearityModel& model, std::size_t n, std::size_t m, double h,
                           const Eigen::VectorXd& u0, const Eigen::VectorXd& v0) {
  return rollout(InterfaceState::FromInitialCondition(u0, v0), n, model, {}, assemble_blocks(m, h));
}

}  // namespace

TEST(EnergyDelta, ConstantJWithoutForcing) {
  DomainState s = DomainState::Zero(3, 1);
  s.j.values.setConstant(1.5);
  EXPECT_EQ(discrete_energy_delta(s, Potential::zero(), 0.1), 0.0);
}

TEST(EnergyDelta, HarmonicDomainConserved) {
  HamiltonianModel osc(HamiltonianModel::Kind::Quadratic, 2.0);
  const Rollout r = oscillator_rollout(osc, 5, 4, 0.1, vec({1.0}), vec({0.5}));
  for (const DomainState& s : r) EXPECT_LT(std::abs(discrete_energy_delta(s, osc.potential(), 0.1)), 1e-12);
}

TEST(EnergyDelta, DampedDomainDissipates) {
  DissipativeModel diss(1.0, 0.5);
  const Rollout r = oscillator_rollout(diss, 20, 4, 0.05, vec({1.0}), vec({0.0}));
  for (const DomainState& s : r) EXPECT_LE(discrete_energy_delta(s, diss.potential(), 0.05), 1e-13);
}

TEST(EnergyDelta, CellDifferenceVariantIsNotConserved) {
  HamiltonianModel osc(HamiltonianModel::Kind::Quadratic, 1.0);
  const Rollout r = oscillator_rollout(osc, 3, 4, 0.1, vec({1.0}), vec({0.0}));
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    worst = std::max(worst, std::abs(discrete_energy_delta_cell_difference(r[i], r[i + 1].mortars.lambda_in,
                                                                           osc.potential())));
  }
  EXPECT_GT(worst, 1e-6);
}

TEST(EnergyReport, HarmonicTenThousandDomains) {
  HamiltonianModel osc(HamiltonianModel::Kind::Quadratic, 1.0);
  const double h = 0.05;
  const Rollout r = oscillator_rollout(osc, 10000, 4, h, vec({1.0}), vec({0.0}));
  const EnergyReport rep = energy_report(r, osc.potential(), h);
  ASSERT_EQ(rep.per_domain.size(), 10000u);
  EXPECT_LT(std::abs(rep.total), 1e-10 * std::sqrt(1e4));
  EXPECT_LT(std::abs(rep.total), 1e-9);
  double sum = 0.0;
  for (double d : rep.per_domain) sum += d;
  EXPECT_NEAR(rep.total, sum, 1e-13);
  EXPECT_LT(rep.stieltjes_drift(), 1e-9);
}

TEST(EnergyReport, DissipativeEveryDomainNonPositive) {
  DissipativeModel diss(1.0, 0.5);
  const double h = 0.05;
  const Rollout r = oscillator_rollout(diss, 500, 4, h, vec({1.0}), vec({0.3}));
  const EnergyReport rep = energy_report(r, diss.potential(), h);
  EXPECT_LE(rep.max_delta(), 1e-13);
  EXPECT_LT(rep.total, 0.0);
  EXPECT_LT(rep.kinetic_endpoints.second + 0.5 * std::pow(r.back().mortars.lambda_out(0), 2), 0.5);
}

TEST(EnergyReport, FreeMotion) {
  ZeroModel zero(2);
  const Rollout r = oscillator_rollout(zero, 10, 3, 0.1, vec({1.0, -1.0}), vec({0.5, 2.0}));
  const EnergyReport rep = energy_report(r, Potential::zero(), 0.1);
  EXPECT_DOUBLE_EQ(rep.kinetic_endpoints.first, rep.kinetic_endpoints.second);
  EXPECT_NEAR(rep.kinetic_endpoints.first, 0.5 * (0.25 + 4.0), 1e-14);
  EXPECT_EQ(rep.total, 0.0);
}

TEST(EnergyReport, PendulumStieltjesEnergyConstant) {
  HamiltonianModel pend(HamiltonianModel::Kind::Pendulum, 1.0);
  const double h = 0.1;
  // Conservation is exact for the discrete equations; the solver tolerance
  // is what accumulates, so solve down to roundoff.
  NewtonSettings tight;
  tight.rel_tol = 1e-15;
  tight.abs_tol = 1e-15;
  const Rollout r = rollout(InterfaceState::FromInitialCondition(vec({2.0}), vec({0.0})), 2000, pend, {},
                            assemble_blocks(4, h), tight);
  const EnergyReport rep = energy_report(r, pend.potential(), h);
  EXPECT_LT(rep.stieltjes_drift(), 1e-10);
  // The continuous Hamiltonian is only approximately conserved.
  EXPECT_TRUE(std::isfinite(rep.hamiltonian_drift()));
  EXPECT_GT(rep.hamiltonian_drift(), rep.stieltjes_drift());
  EXPECT_LT(rep.hamiltonian_drift(), 0.1);
  const nlohmann::json j = rep.to_json(true);
  EXPECT_TRUE(j.contains("total"));
  EXPECT_TRUE(j.contains("stieltjes_drift"));
  EXPECT_EQ(j["per_domain"].size(), 2000u);
}

TEST(JInverse, CorrectedFormOnGrid) {
  EXPECT_LT(check_j_inverse(1, 0.5, InverseForm::Corrected), 1e-14);
  EXPECT_LT(check_j_inverse(64, 0.01, InverseForm::Corrected), 1e-12);
  for (std::size_t m : {1u, 2u, 4u, 8u, 16u, 32u, 64u}) {
    for (double h : {1e-3, 1e-2, 0.1, 0.3, 1.0}) {
      EXPECT_LT(check_j_inverse(m, h, InverseForm::Corrected), 1e-12) << "M=" << m << " h=" << h;
    }
  }
}

TEST(JInverse, PrintedFormIsNotAnInverse) {
  // The closed form with h/6 offsets and corner 1 + 2h/3 leaves an O(1) residual.
  EXPECT_GT(check_j_inverse(1, 0.5, InverseForm::Printed), 0.1);
  EXPECT_GT(check_j_inverse(64, 0.01, InverseForm::Printed), 0.1);
  EXPECT_EQ(check_j_inverse(assemble_blocks(8, 0.1), InverseForm::Printed),
            check_j_inverse(8, 0.1, InverseForm::Printed));
}

TEST(JInverse, CorrectedMatchesNumericInverse) {
  const LinearBlocks b = assemble_blocks(6, 0.2);
  const Eigen::MatrixXd numeric = constant_jacobian(b, 1).inverse();
  EXPECT_LT((explicit_j_inverse(6, 0.2, InverseForm::Corrected) - numeric).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(JInverse, InterfaceRowsOfTheInverse) {
  const std::size_t m = 5;
  const double h = 0.2;
  const Eigen::MatrixXd pt = interface_selector_p(m, 1);
  const Eigen::MatrixXd rows = pt * explicit_j_inverse(m, h, InverseForm::Corrected);
  // [[0^T, 1^T, 1, 0], [-1^T, h2^T, M h, 1]] with h2 = h (M, ..., 1) - h/2.
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(2, 2 * m + 3);
  expect.block(0, m + 1, 1, m).setOnes();
  expect(0, 2 * m + 1) = 1.0;
  expect.block(1, 0, 1, m + 1).setConstant(-1.0);
  for (std::size_t k = 0; k < m; ++k) expect(1, static_cast<Eigen::Index>(m + 1 + k)) = h * static_cast<double>(m - k) - h / 2;
  expect(1, 2 * m + 1) = static_cast<double>(m) * h;
  expect(1, 2 * m + 2) = 1.0;
  EXPECT_LT((rows - expect).cwiseAbs().maxCoeff(), 1e-12) << rows;
  const InterfaceJacobian ij = interface_jacobian(DomainState::Zero(m, 1), ZeroModel(1), {}, assemble_blocks(m, h));
  EXPECT_LT((ij.pt_jinv - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(JInverse, PropagatorForms) {
  const Eigen::Matrix2d corrected = explicit_pt_jinv_q(4, 0.3, InverseForm::Corrected);
  const Eigen::Matrix2d printed = explicit_pt_jinv_q(4, 0.3, InverseForm::Printed);
  EXPECT_NEAR(corrected(1, 0), 1.2, 1e-14);
  EXPECT_NEAR(printed(1, 0), 1.2, 1e-14);
  EXPECT_NEAR(explicit_pt_jinv_q(8, 0.3, InverseForm::Corrected)(1, 0), 2.4, 1e-14);
  EXPECT_NEAR(explicit_pt_jinv_q(8, 0.3, InverseForm::Printed)(1, 0), 1.2, 1e-14);
  EXPECT_EQ(corrected(0, 0), 1.0);
  EXPECT_EQ(corrected(0, 1), 0.0);
  EXPECT_EQ(corrected(1, 1), 1.0);
}

TEST(SbpSuite, AllCasesPass) {
  SbpSuiteSettings s;
  s.cases = 60;
  const auto cases = sbp_suite(s);
  ASSERT_EQ(cases.size(), 60u);
  for (const SbpCase& c : cases) {
    EXPECT_TRUE(c.pass) << c.model << " N=" << c.n_domains << " M=" << c.m_cells << " r=" << c.residual;
    EXPECT_LT(std::abs(c.residual), 1e-10);
  }
  const nlohmann::json j = to_json(cases);
  EXPECT_EQ(j["cases"].size(), 60u);
  EXPECT_TRUE(j["pass"].get<bool>());
}

TEST(SbpSuite, Deterministic) {
  SbpSuiteSettings s;
  s.cases = 5;
  const auto a = sbp_suite(s), b = sbp_suite(s);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].residual, b[k].residual);
}

TEST(PartialsSupNorm, AnalyticModels) {
  HamiltonianModel osc(HamiltonianModel::Kind::Quadratic, 2.5);
  EXPECT_NEAR(partials_sup_norm(osc, {}, 3, 1.0, 10, 1), 2.5, 1e-12);
  DissipativeModel diss(2.0, 0.4);
  EXPECT_NEAR(partials_sup_norm(diss, {}, 3, 1.0, 10, 1), 2.4, 1e-12);
  HamiltonianModel pend(HamiltonianModel::Kind::Pendulum, 1.0);
  EXPECT_LE(partials_sup_norm(pend, {}, 3, 5.0, 50, 1), 1.0);
}
