#pragma once

// A small "local" cross-attention transformer used as the learnable
// nonlinearity. Each cell is decoded independently, with shared weights, from
// its own state u_k, the two nodal values J_k and J_{k+1} bounding it and the
// conditioning vector z. The Jacobian with respect to (u, J) is therefore
// block-banded by construction.
//
// Per cell:
//   tokens  x_u = [u_k, z] W_u + b_u,  x_l = [J_k, z] W_l + b_l,
//           x_r = [J_{k+1}, z] W_r + b_r,  x_z = z W_z + b_z (when z is present)
//   query   q = x_u
//   block   q += Attn(DyT(q), DyT(tokens));  q += W2 tanh(W1 DyT(q) + b1) + b2
//   output  N_k = (DyT(q) W_out + b_out) * out_scale
//
// Inputs are standardised with fixed (non-trainable) shifts and scales stored
// in the config. Derivatives are computed by an explicit reverse sweep.

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hmti/nonlinearity.hpp"

namespace hmti {

/// gamma * tanh(alpha * x) + beta, elementwise.
Eigen::VectorXd dyt(const Eigen::VectorXd& x, double alpha, const Eigen::VectorXd& gamma,
                    const Eigen::VectorXd& beta);

struct LocalTransformerConfig {
  Eigen::Index model_dim = 32;
  Eigen::Index n_blocks = 1;
  Eigen::Index n_heads = 2;
  Eigen::Index state_dim = 1;
  Eigen::Index conditioning_dim = 0;
  Eigen::Index mlp_hidden = 64;
  std::uint64_t init_seed = 0;

  Eigen::VectorXd u_shift, u_scale;  // length state_dim
  Eigen::VectorXd j_scale;           // length state_dim
  Eigen::VectorXd out_scale;         // length state_dim
  Eigen::VectorXd z_shift, z_scale;  // length conditioning_dim

  /// Fills unset normalisation vectors with shift 0 / scale 1 and validates.
  void finalize();
  nlohmann::json to_json() const;
  static LocalTransformerConfig from_json(const nlohmann::json& j);
};

class LocalTransformer final : public NonlinearityModel {
 public:
  /// Hidden weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0, DyT
  /// (alpha, gamma, beta) = (0.5, 1, 0), output head exactly 0.
  explicit LocalTransformer(LocalTransformerConfig config);

  std::string kind() const override { return "local_transformer"; }
  Eigen::Index state_dim() const override { return config_.state_dim; }
  Eigen::Index conditioning_dim() const override { return config_.conditioning_dim; }
  const Eigen::VectorXd& params() const override { return theta_; }
  void set_params(const Eigen::VectorXd& theta) override;

  const LocalTransformerConfig& config() const { return config_; }

  DgP0Field evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  ModelPartials partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const override;
  Eigen::VectorXd theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                            const DgP0Field& cotangent) const override;
  nlohmann::json config_json() const override { return config_.to_json(); }
  std::unique_ptr<NonlinearityModel> clone() const override { return std::make_unique<LocalTransformer>(*this); }

  /// Evaluates one cell from explicit inputs (used by pointwise integrators).
  /// Returns N and, optionally, dN/du and dN/dJ where both nodal inputs are
  /// set to the same value `jv`.
  Eigen::VectorXd evaluate_point(const Eigen::VectorXd& u, const Eigen::VectorXd& jv, const ConditioningVector& z,
                                 Eigen::MatrixXd* d_u = nullptr, Eigen::MatrixXd* d_j = nullptr) const;

  struct Layout;

 private:
  struct Cache;
  struct InputGrads {
    Eigen::MatrixXd u, jl, jr;  // M x d each
  };

  void forward(const Eigen::MatrixXd& u, const Eigen::MatrixXd& jl, const Eigen::MatrixXd& jr,
               const Eigen::VectorXd& z, Cache& cache) const;
  void backward(const Cache& cache, const Eigen::MatrixXd& cot, InputGrads* inputs, Eigen::VectorXd* dtheta) const;

  LocalTransformerConfig config_;
  std::shared_ptr<const Layout> layout_;
  Eigen::VectorXd theta_;
};

}  // namespace hmti
