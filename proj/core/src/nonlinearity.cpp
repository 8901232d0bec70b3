#include "hmti/nonlinearity.hpp"

#include <cmath>

#include "hmti/errors.hpp"
#include "hmti/transformer.hpp"

namespace hmti {

void NonlinearityModel::check_inputs(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  if (u.dim() != state_dim() || j.dim() != state_dim()) {
    throw ShapeError(kind() + ": state dimension mismatch");
  }
  if (j.nodes() != u.cells() + 1) throw ShapeError(kind() + ": J must have one more row than u");
  if (z.size() != conditioning_dim()) {
    throw ShapeError(kind() + ": conditioning vector has size " + std::to_string(z.size()) + ", expected " +
                     std::to_string(conditioning_dim()));
  }
  if (!u.values.allFinite() || !j.values.allFinite() || !z.z.allFinite()) {
    throw NonFiniteError(kind() + ": non-finite input");
  }
}

Potential Potential::zero() {
  return {"zero", [](const Eigen::VectorXd&) { return 0.0; },
          [](const Eigen::VectorXd& u) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(u.size()); }};
}

Potential Potential::quadratic(double omega2) {
  return {"quadratic", [omega2](const Eigen::VectorXd& u) { return -0.5 * omega2 * u.squaredNorm(); },
          [omega2](const Eigen::VectorXd& u) -> Eigen::VectorXd { return -omega2 * u; }};
}

Potential Potential::pendulum(double g) {
  return {"pendulum",
          [g](const Eigen::VectorXd& u) { return g * (u.array().cos() - 1.0).sum(); },
          [g](const Eigen::VectorXd& u) -> Eigen::VectorXd { return -g * u.array().sin().matrix(); }};
}

// ---------------------------------------------------------------- ZeroModel

void ZeroModel::set_params(const Eigen::VectorXd& theta) {
  if (theta.size() != 0) throw ShapeError("zero model has no parameters");
}

DgP0Field ZeroModel::evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  return DgP0Field::Zero(u.cells(), dim_);
}

ModelPartials ZeroModel::partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  const Eigen::Index n = u.cells() * dim_;
  return {Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, j.nodes() * dim_)};
}

Eigen::VectorXd ZeroModel::theta_vjp(const DgP0Field&, const P1Field&, const ConditioningVector&,
                                     const DgP0Field&) const {
  return {};
}

nlohmann::json ZeroModel::config_json() const {
  return {{"kind", "zero"}, {"state_dim", dim_}, {"conditioning_dim", cond_dim_}};
}

// --------------------------------------------------------- HamiltonianModel

HamiltonianModel::HamiltonianModel(Kind kind, double coefficient, Eigen::Index dim, bool trainable)
    : kind_(kind), coefficient_(coefficient), dim_(dim), trainable_(trainable) {
  if (dim <= 0) throw ConfigError("HamiltonianModel: dim must be positive");
  if (trainable_) theta_ = Eigen::VectorXd::Constant(1, coefficient_);
}

void HamiltonianModel::set_params(const Eigen::VectorXd& theta) {
  if (theta.size() != theta_.size()) throw ShapeError("HamiltonianModel: wrong parameter count");
  if (trainable_) {
    theta_ = theta;
    coefficient_ = theta(0);
  }
}

Potential HamiltonianModel::potential() const {
  return kind_ == Kind::Quadratic ? Potential::quadratic(coefficient_) : Potential::pendulum(coefficient_);
}

DgP0Field HamiltonianModel::evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  if (kind_ == Kind::Quadratic) return DgP0Field(-coefficient_ * u.values);
  return DgP0Field(-coefficient_ * u.values.array().sin().matrix());
}

ModelPartials HamiltonianModel::partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  const Eigen::Index n = u.cells() * dim_;
  ModelPartials p{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, j.nodes() * dim_)};
  const Eigen::Map<const Eigen::VectorXd> flat(u.values.data(), n);
  if (kind_ == Kind::Quadratic) {
    p.d_u.diagonal().setConstant(-coefficient_);
  } else {
    p.d_u.diagonal() = -coefficient_ * flat.array().cos().matrix();
  }
  return p;
}

Eigen::VectorXd HamiltonianModel::theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                                            const DgP0Field& cotangent) const {
  check_inputs(u, j, z);
  if (!trainable_) return {};
  if (cotangent.values.rows() != u.cells() || cotangent.values.cols() != dim_) {
    throw ShapeError("HamiltonianModel::theta_vjp: cotangent shape mismatch");
  }
  const Eigen::MatrixXd dn = kind_ == Kind::Quadratic ? Eigen::MatrixXd(-u.values)
                                                      : Eigen::MatrixXd(-u.values.array().sin().matrix());
  return Eigen::VectorXd::Constant(1, cotangent.values.cwiseProduct(dn).sum());
}

nlohmann::json HamiltonianModel::config_json() const {
  return {{"kind", "hamiltonian"},
          {"potential", kind_ == Kind::Quadratic ? "quadratic" : "pendulum"},
          {"coefficient", coefficient_},
          {"state_dim", dim_},
          {"trainable", trainable_}};
}

// --------------------------------------------------------- DissipativeModel

DissipativeModel::DissipativeModel(double omega2, double beta, Eigen::Index dim, Trainable trainable)
    : omega2_(omega2), beta_(beta), dim_(dim), trainable_(trainable) {
  if (dim <= 0) throw ConfigError("DissipativeModel: dim must be positive");
  sync_theta();
}

void DissipativeModel::sync_theta() {
  switch (trainable_) {
    case Trainable::None: theta_.resize(0); break;
    case Trainable::Beta: theta_ = Eigen::VectorXd::Constant(1, beta_); break;
    case Trainable::OmegaAndBeta: theta_ = Eigen::Vector2d(omega2_, beta_); break;
  }
}

void DissipativeModel::set_params(const Eigen::VectorXd& theta) {
  if (theta.size() != theta_.size()) throw ShapeError("DissipativeModel: wrong parameter count");
  if (trainable_ == Trainable::Beta) beta_ = theta(0);
  if (trainable_ == Trainable::OmegaAndBeta) {
    omega2_ = theta(0);
    beta_ = theta(1);
  }
  sync_theta();
}

DgP0Field DissipativeModel::evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  const Eigen::Index m = u.cells();
  const Eigen::MatrixXd avg = 0.5 * (j.values.topRows(m) + j.values.bottomRows(m));
  return DgP0Field(-omega2_ * u.values - beta_ * avg);
}

ModelPartials DissipativeModel::partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  const Eigen::Index m = u.cells();
  const Eigen::Index n = m * dim_;
  ModelPartials p{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, j.nodes() * dim_)};
  p.d_u.diagonal().setConstant(-omega2_);
  for (Eigen::Index c = 0; c < dim_; ++c) {
    for (Eigen::Index k = 0; k < m; ++k) {
      p.d_j(c * m + k, c * (m + 1) + k) = -0.5 * beta_;
      p.d_j(c * m + k, c * (m + 1) + k + 1) = -0.5 * beta_;
    }
  }
  return p;
}

Eigen::VectorXd DissipativeModel::theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                                            const DgP0Field& cotangent) const {
  check_inputs(u, j, z);
  if (cotangent.values.rows() != u.cells() || cotangent.values.cols() != dim_) {
    throw ShapeError("DissipativeModel::theta_vjp: cotangent shape mismatch");
  }
  const Eigen::Index m = u.cells();
  const double d_beta = -cotangent.values.cwiseProduct(0.5 * (j.values.topRows(m) + j.values.bottomRows(m))).sum();
  switch (trainable_) {
    case Trainable::None: return {};
    case Trainable::Beta: return Eigen::VectorXd::Constant(1, d_beta);
    case Trainable::OmegaAndBeta: return Eigen::Vector2d(-cotangent.values.cwiseProduct(u.values).sum(), d_beta);
  }
  return {};
}

nlohmann::json DissipativeModel::config_json() const {
  const char* t = trainable_ == Trainable::None ? "none" : trainable_ == Trainable::Beta ? "beta" : "omega_beta";
  return {{"kind", "dissipative"}, {"omega2", omega2_}, {"beta", beta_}, {"state_dim", dim_}, {"trainable", t}};
}

// ------------------------------------------------------------------ factory

std::unique_ptr<NonlinearityModel> make_model(const nlohmann::json& config, const Eigen::VectorXd& theta) try {
  const std::string kind = config.at("kind").get<std::string>();
  std::unique_ptr<NonlinearityModel> model;
  if (kind == "zero") {
    model = std::make_unique<ZeroModel>(config.at("state_dim").get<Eigen::Index>(),
                                        config.value("conditioning_dim", Eigen::Index{0}));
  } else if (kind == "hamiltonian") {
    const std::string pot = config.at("potential").get<std::string>();
    if (pot != "quadratic" && pot != "pendulum") throw ConfigError("unknown potential '" + pot + "'");
    model = std::make_unique<HamiltonianModel>(
        pot == "quadratic" ? HamiltonianModel::Kind::Quadratic : HamiltonianModel::Kind::Pendulum,
        config.at("coefficient").get<double>(), config.value("state_dim", Eigen::Index{1}),
        config.value("trainable", true));
  } else if (kind == "dissipative") {
    const std::string t = config.value("trainable", std::string("omega_beta"));
    DissipativeModel::Trainable tr = DissipativeModel::Trainable::OmegaAndBeta;
    if (t == "none") tr = DissipativeModel::Trainable::None;
    else if (t == "beta") tr = DissipativeModel::Trainable::Beta;
    else if (t != "omega_beta") throw ConfigError("unknown trainable set '" + t + "'");
    model = std::make_unique<DissipativeModel>(config.at("omega2").get<double>(), config.at("beta").get<double>(),
                                               config.value("state_dim", Eigen::Index{1}), tr);
  } else if (kind == "local_transformer") {
    model = std::make_unique<LocalTransformer>(LocalTransformerConfig::from_json(config));
  } else {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  if (theta.size() > 0) model->set_params(theta);
  return model;
} catch (const nlohmann::json::exception& e) {
  throw ConfigError(std::string("malformed model config: ") + e.what());
}

}  // namespace hmti
