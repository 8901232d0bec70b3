#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hmti;
using hmti::testing::random_matrix;
using hmti::testing::rel_err;
using hmti::testing::vec;

namespace {

struct Problem {
  std::unique_ptr<NonlinearityModel> model;
  ConditioningVector z;
  LinearBlocks blocks;
  InterfaceState y0;
  std::size_t n = 0;
  LossSpec spec;
};

double pipeline_loss(Problem& p, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd keep = p.model->params();
  p.model->set_params(theta);
  const Rollout r = rollout(p.y0, p.n, *p.model, p.z, p.blocks);
  p.model->set_params(keep);
  return loss_and_cotangents(r, p.spec).value;
}

Eigen::VectorXd fd_gradient(Problem& p, double eps = 1e-5) {
  const Eigen::VectorXd theta = p.model->params();
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(k) += eps;
    tm(k) -= eps;
    g(k) = (pipeline_loss(p, tp) - pipeline_loss(p, tm)) / (2 * eps);
  }
  return g;
}

Eigen::VectorXd adjoint_gradient(const Problem& p) {
  const Rollout r = rollout(p.y0, p.n, *p.model, p.z, p.blocks);
  return backward(r, p.y0, *p.model, p.z, p.blocks, loss_and_cotangents(r, p.spec).cotangents);
}

LossSpec random_targets(std::size_t n, Eigen::Index m, Eigen::Index d, std::mt19937_64& rng, LossKind kind) {
  LossSpec s;
  s.kind = kind;
  for (std::size_t i = 0; i < n; ++i) s.targets.push_back(random_matrix(m, d, rng));
  return s;
}

Problem make_problem(std::unique_ptr<NonlinearityModel> model, ConditioningVector z, Eigen::Index m, double h,
                     std::size_t n, std::mt19937_64& rng, LossKind kind = LossKind::Mse) {
  const Eigen::Index d = model->state_dim();
  Problem p{std::move(model), std::move(z), assemble_blocks(static_cast<std::size_t>(m), h),
            {random_matrix(d, 1, rng, 0.5).col(0), random_matrix(d, 1, rng, 0.5).col(0)}, n, {}};
  p.spec = random_targets(n, m, d, rng, kind);
  return p;
}

}  // namespace

TEST(Loss, MatchingTargetsGiveZero) {
  Rollout r{DomainState::Zero(2, 1), DomainState::Zero(2, 1)};
  r[1].u.values << 1.0, 2.0;
  LossSpec s;
  s.targets = {r[0].u.values, r[1].u.values};
  const LossResult l = loss_and_cotangents(r, s);
  EXPECT_EQ(l.value, 0.0);
  for (const auto& c : l.cotangents) EXPECT_TRUE(c.u.isZero(0.0));
}

TEST(Loss, SingleCellExample) {
  Rollout r{DomainState::Zero(1, 1)};
  r[0].u.values(0, 0) = 2.0;
  LossSpec s;
  s.targets = {Eigen::MatrixXd::Zero(1, 1)};
  const LossResult mse = loss_and_cotangents(r, s);
  EXPECT_DOUBLE_EQ(mse.value, 4.0);
  EXPECT_DOUBLE_EQ(mse.cotangents[0].u(0, 0), 4.0);
  s.kind = LossKind::L1;
  const LossResult l1 = loss_and_cotangents(r, s);
  EXPECT_DOUBLE_EQ(l1.value, 2.0);
  EXPECT_DOUBLE_EQ(l1.cotangents[0].u(0, 0), 1.0);
}

TEST(Loss, CotangentsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (LossKind kind : {LossKind::Mse, LossKind::L1}) {
    Rollout r(3, DomainState::Zero(4, 2));
    for (auto& s : r) {
      s.u.values = random_matrix(4, 2, rng);
      s.j.values = random_matrix(5, 2, rng);
    }
    LossSpec spec = random_targets(3, 4, 2, rng, kind);
    spec.weights = {1.0, 0.5, 2.0};
    spec.j_weight = 0.3;
    for (int i = 0; i < 3; ++i) spec.j_targets.push_back(random_matrix(5, 2, rng));
    const LossResult l = loss_and_cotangents(r, spec);
    const double eps = 1e-7;
    for (std::size_t i = 0; i < 3; ++i) {
      for (Eigen::Index k = 0; k < 8; ++k) {
        Rollout a = r, b = r;
        a[i].u.values.data()[k] += eps;
        b[i].u.values.data()[k] -= eps;
        const double fd = (loss_and_cotangents(a, spec).value - loss_and_cotangents(b, spec).value) / (2 * eps);
        EXPECT_NEAR(l.cotangents[i].u.data()[k], fd, 1e-7);
      }
      for (Eigen::Index k = 0; k < 10; ++k) {
        Rollout a = r, b = r;
        a[i].j.values.data()[k] += eps;
        b[i].j.values.data()[k] -= eps;
        const double fd = (loss_and_cotangents(a, spec).value - loss_and_cotangents(b, spec).value) / (2 * eps);
        EXPECT_NEAR(l.cotangents[i].j.data()[k], fd, 1e-7);
      }
    }
  }
}

TEST(Loss, ShapeMismatch) {
  Rollout r{DomainState::Zero(2, 1)};
  LossSpec s;
  EXPECT_THROW(loss_and_cotangents(r, s), ShapeError);
  s.targets = {Eigen::MatrixXd::Zero(3, 1)};
  EXPECT_THROW(loss_and_cotangents(r, s), ShapeError);
  s.targets = {Eigen::MatrixXd::Zero(2, 1)};
  s.weights = {1.0, 2.0};
  EXPECT_THROW(loss_and_cotangents(r, s), ShapeError);
}

TEST(LossKind, ParseRoundTrip) {
  EXPECT_EQ(parse_loss_kind("mse"), LossKind::Mse);
  EXPECT_EQ(parse_loss_kind(to_string(LossKind::L1)), LossKind::L1);
  EXPECT_THROW(parse_loss_kind("vrmse"), ConfigError);
}

TEST(Backward, NoParametersGivesEmptyGradient) {
  std::mt19937_64 rng(2);
  Problem p = make_problem(std::make_unique<ZeroModel>(1), {}, 3, 0.1, 4, rng);
  EXPECT_EQ(adjoint_gradient(p).size(), 0);
}

TEST(Backward, QuadraticPotentialMatchesFd) {
  std::mt19937_64 rng(3);
  Problem p = make_problem(std::make_unique<HamiltonianModel>(HamiltonianModel::Kind::Quadratic, 1.3), {}, 4, 0.05, 8,
                           rng);
  EXPECT_LT(rel_err(adjoint_gradient(p), fd_gradient(p)), 1e-6);
}

TEST(Backward, TransformerMatchesFd) {
  std::mt19937_64 rng(4);
  Problem p = make_problem(std::make_unique<LocalTransformer>(hmti::testing::random_transformer(1, 0, 5)), {}, 4,
                           0.05, 5, rng);
  EXPECT_LT(rel_err(adjoint_gradient(p), fd_gradient(p)), 1e-5);
}

TEST(Backward, RandomDrawsEveryModelType) {
  std::mt19937_64 rng(5);
  for (int draw = 0; draw < 20; ++draw) {
    const Eigen::Index m = 2 + draw % 3;
    const double h = 0.02 + 0.01 * (draw % 4);
    const std::size_t n = 3 + static_cast<std::size_t>(draw % 4);
    const LossKind kind = draw % 5 == 4 ? LossKind::L1 : LossKind::Mse;
    std::vector<Problem> problems;
    problems.push_back(make_problem(
        std::make_unique<LocalTransformer>(hmti::testing::random_transformer(1 + draw % 2, 1, 200 + draw)),
        ConditioningVector(vec({0.1 * draw})), m, h, n, rng, kind));
    problems.push_back(make_problem(
        std::make_unique<HamiltonianModel>(HamiltonianModel::Kind::Pendulum, 0.5 + 0.1 * draw), {}, m, h, n, rng, kind));
    problems.push_back(make_problem(std::make_unique<DissipativeModel>(1.0 + 0.05 * draw, 0.1 + 0.02 * draw, 2), {},
                                    m, h, n, rng, kind));
    for (Problem& p : problems) {
      EXPECT_LT(rel_err(adjoint_gradient(p), fd_gradient(p), 1e-8), 1e-5) << p.model->kind() << " draw " << draw;
    }
  }
}

TEST(Backward, JTermMatchesFd) {
  std::mt19937_64 rng(6);
  Problem p = make_problem(std::make_unique<LocalTransformer>(hmti::testing::random_transformer(2, 0, 6)), {}, 3,
                           0.05, 4, rng);
  p.spec.j_weight = 0.7;
  for (std::size_t i = 0; i < p.n; ++i) p.spec.j_targets.push_back(random_matrix(4, 2, rng));
  EXPECT_LT(rel_err(adjoint_gradient(p), fd_gradient(p)), 1e-5);
}

TEST(AdjointSweep, InitialStateGradientMatchesFd) {
  std::mt19937_64 rng(7);
  Problem p = make_problem(std::make_unique<HamiltonianModel>(HamiltonianModel::Kind::Pendulum, 2.0, 2), {}, 4, 0.05,
                           6, rng);
  const Rollout r = rollout(p.y0, p.n, *p.model, p.z, p.blocks);
  const AdjointWorkspace ws =
      adjoint_sweep(r, p.y0, *p.model, p.z, p.blocks, loss_and_cotangents(r, p.spec).cotangents);
  const double eps = 1e-6;
  auto loss_at = [&](const InterfaceState& y) {
    return loss_and_cotangents(rollout(y, p.n, *p.model, p.z, p.blocks), p.spec).value;
  };
  for (Eigen::Index c = 0; c < 2; ++c) {
    InterfaceState a = p.y0, b = p.y0;
    a.j_end(c) += eps;
    b.j_end(c) -= eps;
    EXPECT_LT(rel_err(ws.grad_y0.j_end(c), (loss_at(a) - loss_at(b)) / (2 * eps), 1e-8), 1e-6);
    a = p.y0;
    b = p.y0;
    a.lambda_out(c) += eps;
    b.lambda_out(c) -= eps;
    EXPECT_LT(rel_err(ws.grad_y0.lambda_out(c), (loss_at(a) - loss_at(b)) / (2 * eps), 1e-8), 1e-6);
  }
}

TEST(AdjointSweep, Causality) {
  // With zero weight from domain k on, later targets cannot influence the gradient.
  std::mt19937_64 rng(8);
  Problem p = make_problem(std::make_unique<LocalTransformer>(hmti::testing::random_transformer(1, 0, 8)), {}, 4, 0.05,
                           8, rng);
  p.spec.weights = {1, 1, 1, 0, 0, 0, 0, 0};
  const Eigen::VectorXd g1 = adjoint_gradient(p);
  for (std::size_t i = 3; i < p.n; ++i) p.spec.targets[i] = random_matrix(4, 1, rng, 10.0);
  const Eigen::VectorXd g2 = adjoint_gradient(p);
  EXPECT_EQ(g1, g2);
  const Rollout r = rollout(p.y0, p.n, *p.model, p.z, p.blocks);
  const AdjointWorkspace ws =
      adjoint_sweep(r, p.y0, *p.model, p.z, p.blocks, loss_and_cotangents(r, p.spec).cotangents);
  for (std::size_t i = 3; i < p.n; ++i) EXPECT_TRUE(ws.w[i].isZero(0.0));
}

TEST(InterfaceJacobian, FreeMotionClosedForm) {
  ZeroModel zero(1);
  for (std::size_t m : {1u, 2u, 4u, 8u, 32u}) {
    for (double h : {0.01, 0.1, 0.3}) {
      const LinearBlocks b = assemble_blocks(m, h);
      const InterfaceState y{vec({0.4}), vec({-0.2})};
      const InterfaceJacobian ij = interface_jacobian(newton_solve_domain(y, zero, {}, b, {}, initial_guess(y, b)),
                                                      zero, {}, b);
      Eigen::Matrix2d expect;
      expect << 1.0, 0.0, static_cast<double>(m) * h, 1.0;
      EXPECT_LT((ij.pt_jinv_q - expect).cwiseAbs().maxCoeff(), 1e-12) << "M=" << m << " h=" << h;
    }
  }
}

TEST(InterfaceJacobian, FourCellsAtPointThreeGivesOnePointTwo) {
  ZeroModel zero(1);
  const LinearBlocks b = assemble_blocks(4, 0.3);
  const auto ij = interface_jacobian_norms(zero, {}, b, {InterfaceState::Zero(1)});
  ASSERT_EQ(ij.size(), 1u);
  Eigen::Matrix2d expect;
  expect << 1.0, 0.0, 1.2, 1.0;
  EXPECT_LT((ij[0].pt_jinv_q - expect).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(ij[0].norm_pt_jinv_q, spectral_norm(expect), 1e-13);
}

TEST(InterfaceJacobian, SelectorsAndLift) {
  const Eigen::MatrixXd p = interface_selector_p(3, 2);
  const Eigen::MatrixXd q = interface_lift_q(3, 2);
  const UnknownLayout lay{3, 2};
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(q.cols(), 4);
  EXPECT_EQ(p(1, lay.j(1, 3)), 1.0);
  EXPECT_EQ(p(3, lay.lambda_out(1)), 1.0);
  EXPECT_EQ(p.sum(), 4.0);
  EXPECT_EQ(q.sum(), 4.0);
}

TEST(InterfaceJacobian, InverseNormSlopeMinusHalf) {
  // Refinement at fixed domain length Delta t = 1, so M = 1/h.
  ZeroModel zero(1);
  std::vector<double> lh, ln;
  for (int e = 2; e <= 7; ++e) {
    const double h = std::ldexp(1.0, -e);
    const auto ij = interface_jacobian_norms(zero, {}, assemble_blocks(std::size_t{1} << e, h), {InterfaceState::Zero(1)});
    lh.push_back(std::log(h));
    ln.push_back(std::log(ij[0].norm_pt_jinv));
  }
  const Eigen::Map<Eigen::VectorXd> x(lh.data(), 6), y(ln.data(), 6);
  const double xm = x.mean(), ym = y.mean();
  const double slope = ((x.array() - xm) * (y.array() - ym)).sum() / (x.array() - xm).square().sum();
  EXPECT_NEAR(slope, -0.5, 0.1);
}

TEST(InterfaceJacobian, PropagatorNormTendsToOneFromAbove) {
  ZeroModel zero(1);
  double prev = std::numeric_limits<double>::infinity();
  for (double h : {0.1, 0.01, 0.001, 1e-4}) {
    const double nrm = interface_jacobian_norms(zero, {}, assemble_blocks(4, h), {InterfaceState::Zero(1)})[0]
                           .norm_pt_jinv_q;
    EXPECT_GT(nrm, 1.0);
    EXPECT_LT(nrm, prev);
    prev = nrm;
  }
  EXPECT_LT(prev - 1.0, 1e-3);
}

TEST(InterfaceSensitivity, ForwardMatchesAdjointAndFd) {
  std::mt19937_64 rng(9);
  LocalTransformer t = hmti::testing::random_transformer(2, 1, 33);
  const ConditioningVector z(vec({0.4}));
  const LinearBlocks b = assemble_blocks(4, 0.05);
  const InterfaceState y0{vec({0.3, -0.1}), vec({0.2, 0.5})};
  const Rollout r = rollout(y0, 6, t, z, b);
  const auto fwd = interface_sensitivity_forward(r, t, z, b, {3, 6});
  ASSERT_EQ(fwd.size(), 2u);
  const Eigen::MatrixXd adj = interface_sensitivity_adjoint(r, y0, t, z, b);
  EXPECT_LT(rel_err(fwd[1], adj), 1e-12);
  const Eigen::MatrixXd adj3 = interface_sensitivity_adjoint(Rollout(r.begin(), r.begin() + 3), y0, t, z, b);
  EXPECT_LT(rel_err(fwd[0], adj3), 1e-12);
  // A few columns by finite differences.
  const Eigen::VectorXd theta = t.params();
  const double eps = 1e-5;
  for (Eigen::Index k : {Eigen::Index{0}, theta.size() / 2, theta.size() - 1}) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(k) += eps;
    tm(k) -= eps;
    auto interface_end = [&](const Eigen::VectorXd& th) {
      t.set_params(th);
      const InterfaceState y = restrict(rollout(y0, 6, t, z, b).back());
      Eigen::VectorXd out(4);
      out << y.j_end, y.lambda_out;
      return out;
    };
    const Eigen::VectorXd fd = (interface_end(tp) - interface_end(tm)) / (2 * eps);
    t.set_params(theta);
    EXPECT_LT(rel_err(Eigen::MatrixXd(adj.col(k)), Eigen::MatrixXd(fd), 1e-9), 1e-5);
  }
}

TEST(GradientNormSweep, NoParametersGivesZeros) {
  ZeroModel zero(1);
  const auto pts = gradient_norm_sweep(zero, {}, assemble_blocks(4, 0.05), {vec({1.0}), vec({0.0})}, {1, 5, 10});
  ASSERT_EQ(pts.size(), 3u);
  for (const auto& p : pts) EXPECT_EQ(p.norm, 0.0);
  EXPECT_EQ(pts[2].n_domains, 10u);
}

TEST(GradientNormSweep, DampedOscillatorPlateaus) {
  // d y / d beta behaves like t exp(-beta t / 2); with beta = 0.05 and
  // Delta t = 0.1 the horizons 10 and 100 straddle its maximum.
  DissipativeModel diss(1.0, 0.05, 1, DissipativeModel::Trainable::Beta);
  const auto pts = gradient_norm_sweep(diss, {}, assemble_blocks(4, 0.025),
                                       InterfaceState::FromInitialCondition(vec({1.0}), vec({0.0})), {10, 100, 1000});
  ASSERT_EQ(pts.size(), 3u);
  for (const auto& p : pts) EXPECT_TRUE(std::isfinite(p.norm));
  EXPECT_GT(pts[0].norm, 0.0);
  const double lo = std::min(pts[1].norm, pts[2].norm), hi = std::max(pts[1].norm, pts[2].norm);
  EXPECT_LE(hi, 2.0 * lo);
}

TEST(SpectralNorm, Examples) {
  Eigen::Matrix2d a;
  a << 3.0, 0.0, 0.0, -4.0;
  EXPECT_NEAR(spectral_norm(a), 4.0, 1e-14);
  EXPECT_EQ(spectral_norm(Eigen::MatrixXd::Zero(2, 0)), 0.0);
}
