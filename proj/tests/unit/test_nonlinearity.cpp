#include <cstring>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hmti;
using hmti::testing::random_matrix;
using hmti::testing::rel_err;
using hmti::testing::vec;

namespace {

struct Inputs {
  DgP0Field u;
  P1Field j;
  ConditioningVector z;
};

Inputs random_inputs(Eigen::Index m, Eigen::Index d, Eigen::Index p, std::mt19937_64& rng) {
  return {DgP0Field(random_matrix(m, d, rng)), P1Field(random_matrix(m + 1, d, rng)),
          ConditioningVector(random_matrix(p, 1, rng).col(0))};
}

// Column-major flattening, matching ModelPartials.
Eigen::VectorXd flat(const Eigen::MatrixXd& a) { return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()); }

ModelPartials fd_partials(const NonlinearityModel& model, const Inputs& in, double eps = 1e-5) {
  const Eigen::Index m = in.u.cells(), d = in.u.dim();
  ModelPartials p{Eigen::MatrixXd(m * d, m * d), Eigen::MatrixXd(m * d, (m + 1) * d)};
  for (Eigen::Index c = 0; c < m * d; ++c) {
    Inputs a = in, b = in;
    a.u.values.data()[c] += eps;
    b.u.values.data()[c] -= eps;
    p.d_u.col(c) = (flat(model.evaluate(a.u, a.j, a.z).values) - flat(model.evaluate(b.u, b.j, b.z).values)) / (2 * eps);
  }
  for (Eigen::Index c = 0; c < (m + 1) * d; ++c) {
    Inputs a = in, b = in;
    a.j.values.data()[c] += eps;
    b.j.values.data()[c] -= eps;
    p.d_j.col(c) = (flat(model.evaluate(a.u, a.j, a.z).values) - flat(model.evaluate(b.u, b.j, b.z).values)) / (2 * eps);
  }
  return p;
}

void expect_partials_match_fd(const NonlinearityModel& model, const Inputs& in) {
  const ModelPartials an = model.partials(in.u, in.j, in.z);
  const ModelPartials fd = fd_partials(model, in);
  EXPECT_LT(rel_err(an.d_u, fd.d_u, 1e-8), 1e-6);
  EXPECT_LT(rel_err(an.d_j, fd.d_j, 1e-8), 1e-6);
}

void expect_theta_vjp_matches_fd(NonlinearityModel& model, const Inputs& in, std::mt19937_64& rng) {
  const Eigen::VectorXd theta = model.params();
  const Eigen::MatrixXd cot = random_matrix(in.u.cells(), in.u.dim(), rng);
  const Eigen::VectorXd dir = random_matrix(theta.size(), 1, rng).col(0);
  const Eigen::VectorXd vjp = model.theta_vjp(in.u, in.j, in.z, DgP0Field(cot));
  const double eps = 1e-5;
  model.set_params(theta + eps * dir);
  const double fp = (cot.array() * model.evaluate(in.u, in.j, in.z).values.array()).sum();
  model.set_params(theta - eps * dir);
  const double fm = (cot.array() * model.evaluate(in.u, in.j, in.z).values.array()).sum();
  model.set_params(theta);
  EXPECT_LT(rel_err(vjp.dot(dir), (fp - fm) / (2 * eps), 1e-9), 1e-6);
}

}  // namespace

TEST(Dyt, Examples) {
  const Eigen::VectorXd x = vec({-1.0, 0.0, 2.0});
  EXPECT_TRUE(dyt(x, 0.0, Eigen::VectorXd::Ones(3), vec({0.1, 0.2, 0.3})).isApprox(vec({0.1, 0.2, 0.3})));
  EXPECT_NEAR(dyt(vec({3.0}), 50.0, vec({1.0}), vec({0.0}))(0), 1.0, 1e-12);
  // 2 tanh(0.5) + 1
  EXPECT_NEAR(dyt(vec({0.5}), 1.0, vec({2.0}), vec({1.0}))(0), 1.9242343145200195, 1e-12);
  EXPECT_THROW(dyt(x, 1.0, vec({1.0}), vec({0.0})), ShapeError);
}

TEST(HamiltonianModel, QuadraticEvaluateAndPartials) {
  const double w2 = 2.5;
  HamiltonianModel h(HamiltonianModel::Kind::Quadratic, w2);
  const DgP0Field u(vec({1.0, 2.0}));
  const P1Field j(vec({0.0, 0.0, 0.0}));
  EXPECT_TRUE(h.evaluate(u, j, {}).values.isApprox(vec({-w2, -2 * w2})));
  const ModelPartials p = h.partials(u, j, {});
  EXPECT_TRUE(p.d_u.isApprox(-w2 * Eigen::MatrixXd::Identity(2, 2)));
  EXPECT_TRUE(p.d_j.isZero(0.0));
}

TEST(HamiltonianModel, PendulumPotentialConsistent) {
  HamiltonianModel h(HamiltonianModel::Kind::Pendulum, 1.3);
  const Potential v = h.potential();
  const Eigen::VectorXd u = vec({0.7});
  EXPECT_NEAR(v.gradient(u)(0), -1.3 * std::sin(0.7), 1e-15);
  const double eps = 1e-6;
  EXPECT_NEAR((v.value(u + vec({eps})) - v.value(u - vec({eps}))) / (2 * eps), v.gradient(u)(0), 1e-9);
}

TEST(DissipativeModel, DampingTermIsBetaTimesCellAverage) {
  // V' = 0; the damping contribution is -beta * (cell averages (1, 3)).
  DissipativeModel m(0.0, 0.5);
  const DgP0Field u(vec({0.0, 0.0}));
  const P1Field j(vec({0.0, 2.0, 4.0}));
  EXPECT_TRUE(m.evaluate(u, j, {}).values.isApprox(vec({-0.5, -1.5})));
  const ModelPartials p = m.partials(u, j, {});
  Eigen::MatrixXd expect(2, 3);
  expect << 0.5, 0.5, 0, 0, 0.5, 0.5;
  EXPECT_TRUE(p.d_j.isApprox(-0.5 * expect));
}

TEST(DissipativeModel, TrainableSubsets) {
  EXPECT_EQ(DissipativeModel(1.0, 0.2, 1, DissipativeModel::Trainable::None).num_params(), 0);
  EXPECT_EQ(DissipativeModel(1.0, 0.2, 1, DissipativeModel::Trainable::Beta).num_params(), 1);
  EXPECT_EQ(DissipativeModel(1.0, 0.2, 1, DissipativeModel::Trainable::OmegaAndBeta).num_params(), 2);
}

TEST(ZeroModel, NoParameters) {
  ZeroModel z(2);
  const DgP0Field u(Eigen::MatrixXd::Ones(3, 2));
  const P1Field j(Eigen::MatrixXd::Ones(4, 2));
  EXPECT_TRUE(z.evaluate(u, j, {}).values.isZero(0.0));
  EXPECT_EQ(z.theta_vjp(u, j, {}, DgP0Field(Eigen::MatrixXd::Ones(3, 2))).size(), 0);
}

TEST(AnalyticModels, ThetaVjpEmptyWithoutParameters) {
  HamiltonianModel h(HamiltonianModel::Kind::Quadratic, 1.0, 1, false);
  const DgP0Field u(vec({1.0}));
  const P1Field j(vec({1.0, 2.0}));
  EXPECT_EQ(h.theta_vjp(u, j, {}, DgP0Field(vec({1.0}))).size(), 0);
}

TEST(LocalTransformer, ZeroHeadGivesZeroField) {
  LocalTransformerConfig cfg;
  cfg.state_dim = 2;
  LocalTransformer t(cfg);
  std::mt19937_64 rng(1);
  const Inputs in = random_inputs(5, 2, 0, rng);
  EXPECT_TRUE(t.evaluate(in.u, in.j, in.z).values.isZero(0.0));
  // theta = 0 everywhere as well.
  t.set_params(Eigen::VectorXd::Zero(t.num_params()));
  EXPECT_TRUE(t.evaluate(in.u, in.j, in.z).values.isZero(0.0));
}

TEST(LocalTransformer, ConfigValidation) {
  LocalTransformerConfig cfg;
  cfg.model_dim = 10;
  cfg.n_heads = 3;
  EXPECT_THROW(LocalTransformer{cfg}, ConfigError);
  LocalTransformerConfig ok;
  LocalTransformer t(ok);
  EXPECT_THROW(t.set_params(Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST(LocalTransformer, RejectsBadInputs) {
  const LocalTransformer t = hmti::testing::random_transformer(1, 1, 4);
  const DgP0Field u(vec({1.0, 2.0}));
  EXPECT_THROW(t.evaluate(u, P1Field(vec({1.0, 2.0})), ConditioningVector(vec({0.1}))), ShapeError);
  EXPECT_THROW(t.evaluate(u, P1Field(vec({1.0, 2.0, 3.0})), {}), ShapeError);
  EXPECT_THROW(t.evaluate(u, P1Field(vec({1.0, std::nan(""), 3.0})), ConditioningVector(vec({0.1}))),
               NonFiniteError);
}

TEST(LocalTransformer, PartialsMatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  for (int seed = 0; seed < 100; ++seed) {
    const Eigen::Index d = 1 + seed % 3, p = seed % 2, m = 1 + seed % 4;
    const LocalTransformer t = hmti::testing::random_transformer(d, p, static_cast<std::uint64_t>(seed));
    expect_partials_match_fd(t, random_inputs(m, d, p, rng));
  }
}

TEST(AnalyticModels, PartialsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int seed = 0; seed < 100; ++seed) {
    const Eigen::Index m = 1 + seed % 5;
    HamiltonianModel quad(HamiltonianModel::Kind::Quadratic, 0.5 + seed * 0.01, 2);
    HamiltonianModel pend(HamiltonianModel::Kind::Pendulum, 1.0 + seed * 0.02);
    DissipativeModel diss(1.0 + seed * 0.01, 0.1 * (seed % 7));
    expect_partials_match_fd(quad, random_inputs(m, 2, 0, rng));
    expect_partials_match_fd(pend, random_inputs(m, 1, 0, rng));
    expect_partials_match_fd(diss, random_inputs(m, 1, 0, rng));
  }
}

TEST(LocalTransformer, ThetaVjpMatchesDirectionalFd) {
  std::mt19937_64 rng(9);
  for (int seed = 0; seed < 30; ++seed) {
    LocalTransformer t = hmti::testing::random_transformer(1 + seed % 2, seed % 2, static_cast<std::uint64_t>(seed));
    expect_theta_vjp_matches_fd(t, random_inputs(3, t.state_dim(), t.conditioning_dim(), rng), rng);
  }
}

TEST(AnalyticModels, ThetaVjpMatchesDirectionalFd) {
  std::mt19937_64 rng(10);
  HamiltonianModel quad(HamiltonianModel::Kind::Quadratic, 1.7);
  HamiltonianModel pend(HamiltonianModel::Kind::Pendulum, 0.9);
  DissipativeModel diss(1.2, 0.4);
  for (int rep = 0; rep < 10; ++rep) {
    expect_theta_vjp_matches_fd(quad, random_inputs(4, 1, 0, rng), rng);
    expect_theta_vjp_matches_fd(pend, random_inputs(4, 1, 0, rng), rng);
    expect_theta_vjp_matches_fd(diss, random_inputs(4, 1, 0, rng), rng);
  }
}

TEST(LocalTransformer, ZeroCotangentGivesZeroVjp) {
  const LocalTransformer t = hmti::testing::random_transformer(2, 1, 5);
  std::mt19937_64 rng(2);
  const Inputs in = random_inputs(3, 2, 1, rng);
  const Eigen::VectorXd g = t.theta_vjp(in.u, in.j, in.z, DgP0Field::Zero(3, 2));
  EXPECT_EQ(g.size(), t.num_params());
  EXPECT_TRUE(g.isZero(0.0));
}

TEST(LocalTransformer, Locality) {
  const LocalTransformer t = hmti::testing::random_transformer(2, 0, 11);
  std::mt19937_64 rng(5);
  const Eigen::Index m = 6;
  const Inputs in = random_inputs(m, 2, 0, rng);
  const Eigen::MatrixXd base = t.evaluate(in.u, in.j, in.z).values;
  for (Eigen::Index node = 0; node <= m; ++node) {
    Inputs pert = in;
    pert.j.values(node, 1) += 0.37;
    const Eigen::MatrixXd diff = t.evaluate(pert.u, pert.j, pert.z).values - base;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k == node - 1 || k == node) {
        EXPECT_GT(diff.row(k).norm(), 0.0);
      } else {
        EXPECT_EQ(diff.row(k).norm(), 0.0) << "node " << node << " cell " << k;
      }
    }
  }
  // Banded dJ block.
  const ModelPartials p = t.partials(in.u, in.j, in.z);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index k = 0; k < m; ++k) {
      for (Eigen::Index c2 = 0; c2 < 2; ++c2) {
        for (Eigen::Index n = 0; n <= m; ++n) {
          if (n != k && n != k + 1) EXPECT_EQ(p.d_j(c * m + k, c2 * (m + 1) + n), 0.0);
        }
      }
    }
  }
}

TEST(LocalTransformer, Deterministic) {
  const LocalTransformer t = hmti::testing::random_transformer(3, 1, 8);
  std::mt19937_64 rng(3);
  const Inputs in = random_inputs(4, 3, 1, rng);
  const Eigen::MatrixXd a = t.evaluate(in.u, in.j, in.z).values;
  const Eigen::MatrixXd b = t.evaluate(in.u, in.j, in.z).values;
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
  const LocalTransformer same = hmti::testing::random_transformer(3, 1, 8);
  EXPECT_EQ(same.params(), t.params());
}

TEST(LocalTransformer, EvaluatePointMatchesOneCell) {
  const LocalTransformer t = hmti::testing::random_transformer(2, 1, 12);
  const Eigen::VectorXd u = vec({0.3, -0.4}), v = vec({1.1, 0.2});
  const ConditioningVector z(vec({0.5}));
  Eigen::MatrixXd du, dj;
  const Eigen::VectorXd n = t.evaluate_point(u, v, z, &du, &dj);
  const DgP0Field cu(u.transpose());
  const P1Field cj(v.transpose().replicate(2, 1));
  EXPECT_TRUE(n.isApprox(t.evaluate(cu, cj, z).values.row(0).transpose(), 1e-14));
  const ModelPartials p = t.partials(cu, cj, z);
  EXPECT_TRUE(du.isApprox(p.d_u, 1e-12));
  Eigen::MatrixXd dj_expect(2, 2);
  for (int c = 0; c < 2; ++c) dj_expect.col(c) = p.d_j.col(2 * c) + p.d_j.col(2 * c + 1);
  EXPECT_TRUE(dj.isApprox(dj_expect, 1e-12));
}

TEST(MakeModel, RoundTripsEveryKind) {
  std::mt19937_64 rng(21);
  std::vector<std::unique_ptr<NonlinearityModel>> models;
  models.push_back(std::make_unique<ZeroModel>(2, 1));
  models.push_back(std::make_unique<HamiltonianModel>(HamiltonianModel::Kind::Pendulum, 1.5));
  models.push_back(std::make_unique<DissipativeModel>(2.0, 0.3, 1, DissipativeModel::Trainable::Beta));
  models.push_back(std::make_unique<LocalTransformer>(hmti::testing::random_transformer(2, 1, 3)));
  for (const auto& m : models) {
    const auto copy = make_model(nlohmann::json::parse(m->config_json().dump()), m->params());
    EXPECT_EQ(copy->kind(), m->kind());
    EXPECT_EQ(copy->params(), m->params());
    const Inputs in = random_inputs(3, m->state_dim(), m->conditioning_dim(), rng);
    EXPECT_EQ(copy->evaluate(in.u, in.j, in.z).values, m->evaluate(in.u, in.j, in.z).values);
  }
  EXPECT_THROW(make_model({{"kind", "nope"}}), ConfigError);
  EXPECT_THROW(make_model({{"kind", "hamiltonian"}}), ConfigError);
}

TEST(LocalTransformer, DerivativesBoundedOnInputBall) {
  const LocalTransformer t = hmti::testing::random_transformer(2, 0, 31, 0.3, 16);
  const double sup_small = partials_sup_norm(t, {}, 4, 1.0, 50, 1);
  const double sup_large = partials_sup_norm(t, {}, 4, 100.0, 50, 1);
  EXPECT_TRUE(std::isfinite(sup_small));
  EXPECT_TRUE(std::isfinite(sup_large));
  EXPECT_GT(sup_small, 0.0);
}
