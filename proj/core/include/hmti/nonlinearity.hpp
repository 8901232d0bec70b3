#pragma once

// Pluggable nonlinearities N(u, J, z; theta) of the second-order dynamics
// u'' = N. Models return cellwise values on one rollout domain together with
// exact derivatives with respect to the cell field, the nodal field and theta.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hmti/feec.hpp"

namespace hmti {

/// Problem parameters injected into the nonlinearity (e.g. a damping rate).
struct ConditioningVector {
  Eigen::VectorXd z;

  ConditioningVector() = default;
  explicit ConditioningVector(Eigen::VectorXd v) : z(std::move(v)) {}
  Eigen::Index size() const { return z.size(); }
};

/// Dense Jacobians of the flattened output. Flattening follows Eigen's
/// column-major order: cell field entry (k, c) -> c * M + k, nodal field entry
/// (n, c) -> c * (M + 1) + n.
struct ModelPartials {
  Eigen::MatrixXd d_u;  // (M d) x (M d)
  Eigen::MatrixXd d_j;  // (M d) x ((M+1) d)
};

class NonlinearityModel {
 public:
  virtual ~NonlinearityModel() = default;

  virtual std::string kind() const = 0;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index conditioning_dim() const { return 0; }

  virtual Eigen::Index num_params() const { return params().size(); }
  virtual const Eigen::VectorXd& params() const = 0;
  virtual void set_params(const Eigen::VectorXd& theta) = 0;

  virtual DgP0Field evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const = 0;
  virtual ModelPartials partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const = 0;
  /// cotangent^T * dN/dtheta, a vector of length num_params().
  virtual Eigen::VectorXd theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                                    const DgP0Field& cotangent) const = 0;

  /// Everything except theta needed to rebuild the model.
  virtual nlohmann::json config_json() const = 0;
  virtual std::unique_ptr<NonlinearityModel> clone() const = 0;

 protected:
  /// Shape and finiteness checks shared by every model.
  void check_inputs(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const;
};

/// Scalar potential with gradient, applied to the state vector of one cell.
/// Sign convention matches the dynamics J' = V'(u): V(u) = -w^2 |u|^2 / 2 is
/// the harmonic oscillator.
struct Potential {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;

  static Potential zero();
  /// V = -omega2/2 |u|^2.
  static Potential quadratic(double omega2);
  /// V = g (cos(u) - 1) summed over components, V' = -g sin(u).
  static Potential pendulum(double g);
};

/// N == 0. No parameters.
class ZeroModel final : public NonlinearityModel {
 public:
  explicit ZeroModel(Eigen::Index dim, Eigen::Index cond_dim = 0) : dim_(dim), cond_dim_(cond_dim) {}

  std::string kind() const override { return "zero"; }
  Eigen::Index state_dim() const override { return dim_; }
  Eigen::Index conditioning_dim() const override { return cond_dim_; }
  const Eigen::VectorXd& params() const override { return theta_; }
  void set_params(const Eigen::VectorXd& theta) override;

  DgP0Field evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  ModelPartials partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  Eigen::VectorXd theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                            const DgP0Field& cotangent) const override;
  nlohmann::json config_json() const override;
  std::unique_ptr<NonlinearityModel> clone() const override { return std::make_unique<ZeroModel>(*this); }

 private:
  Eigen::Index dim_;
  Eigen::Index cond_dim_;
  Eigen::VectorXd theta_;
};

/// Conservative forcing N = V'(u), applied cellwise.
///
/// kind "quadratic": V'(u) = -omega2 * u, theta = (omega2) when trainable.
/// kind "pendulum":  V'(u) = -g * sin(u), theta = (g) when trainable.
class HamiltonianModel final : public NonlinearityModel {
 public:
  enum class Kind { Quadratic, Pendulum };

  HamiltonianModel(Kind kind, double coefficient, Eigen::Index dim = 1, bool trainable = true);

  std::string kind() const override { return "hamiltonian"; }
  Eigen::Index state_dim() const override { return dim_; }
  const Eigen::VectorXd& params() const override { return theta_; }
  void set_params(const Eigen::VectorXd& theta) override;

  double coefficient() const { return coefficient_; }
  Kind potential_kind() const { return kind_; }
  Potential potential() const;

  DgP0Field evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  ModelPartials partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  Eigen::VectorXd theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                            const DgP0Field& cotangent) const override;
  nlohmann::json config_json() const override;
  std::unique_ptr<NonlinearityModel> clone() const override {
    return std::make_unique<HamiltonianModel>(*this);
  }

 private:
  Kind kind_;
  double coefficient_;
  Eigen::Index dim_;
  bool trainable_;
  Eigen::VectorXd theta_;
};

/// Damped forcing N = V'(u) - beta * pi(J) with V quadratic, i.e. the linear
/// damped oscillator u'' = -omega2 u - beta u' in mixed form. The damping term
/// uses the cell average of J, so its bilinear form beta (pi J, q) is elliptic
/// on the cell space.
///
/// Trainable subsets: theta = (omega2, beta), (beta) or none.
class DissipativeModel final : public NonlinearityModel {
 public:
  enum class Trainable { None, Beta, OmegaAndBeta };

  DissipativeModel(double omega2, double beta, Eigen::Index dim = 1, Trainable trainable = Trainable::OmegaAndBeta);

  std::string kind() const override { return "dissipative"; }
  Eigen::Index state_dim() const override { return dim_; }
  const Eigen::VectorXd& params() const override { return theta_; }
  void set_params(const Eigen::VectorXd& theta) override;

  double omega2() const { return omega2_; }
  double beta() const { return beta_; }
  Potential potential() const { return Potential::quadratic(omega2_); }

  DgP0Field evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  ModelPartials partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  Eigen::VectorXd theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                            const DgP0Field& cotangent) const override;
  nlohmann::json config_json() const override;
  std::unique_ptr<NonlinearityModel> clone() const override {
    return std::make_unique<DissipativeModel>(*this);
  }

 private:
  void sync_theta();

  double omega2_;
  double beta_;
  Eigen::Index dim_;
  Trainable trainable_;
  Eigen::VectorXd theta_;
};

/// Rebuilds a model from `config_json()` output and a parameter vector. An
/// empty theta keeps the model's default initialisation.
std::unique_ptr<NonlinearityModel> make_model(const nlohmann::json& config, const Eigen::VectorXd& theta = {});

}  // namespace hmti
