#pragma once

// Minibatch training of a nonlinearity through full rollouts: random windows,
// Newton solves per domain, adjoint gradients, Adam with decoupled weight decay.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hmti/checkpoint.hpp"
#include "hmti/data.hpp"
#include "hmti/errors.hpp"
#include "hmti/mortar.hpp"
#include "hmti/sensitivity.hpp"

namespace hmti {

/// More than half of a batch failed to converge.
class TrainingAborted : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "training_aborted"; }
};

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  /// Cosine decay of lr to lr * lr_floor over the step budget.
  bool cosine = false;
  double lr_floor = 0.0;
  /// Global-norm gradient clipping; 0 disables it.
  double grad_clip = 0.0;
};

struct TrainConfig {
  std::size_t n_domains = 11;
  std::size_t m_cells = 10;
  Alignment alignment = Alignment::Left;
  nlohmann::json model = {{"kind", "local_transformer"}};
  /// Fill transformer normalisation (shifts/scales) from data statistics.
  bool auto_normalize = true;
  OptimizerConfig optimizer;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  LossKind loss = LossKind::Mse;
  double j_loss_weight = 0.0;
  std::uint64_t seed = 0;
  std::size_t probe_size = 64;
  std::size_t probe_every = 50;
  std::size_t checkpoint_every = 0;
  std::size_t threads = 1;
  NewtonSettings newton;

  void validate() const;
  nlohmann::json to_json() const;
  /// Flat object; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
  std::uint64_t step = 0;
  Eigen::VectorXd m, v;

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& j);
};

/// One update; returns the learning rate used.
double adam_update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, const OptimizerConfig& cfg,
                   std::size_t total_steps);

struct BatchResult {
  double loss = 0.0;  // mean over windows that converged
  Eigen::VectorXd grad;
  std::size_t used = 0;
  std::size_t skipped = 0;
  std::vector<std::string> failures;
};

/// Rolls out and differentiates every window. Windows whose solve fails are
/// skipped and counted. Reduction order is fixed, so results do not depend on
/// `threads`.
BatchResult evaluate_batch(const NonlinearityModel& model, const std::vector<TrainingWindow>& windows,
                           const WindowSpec& spec, double h, LossKind loss, double j_weight,
                           const NewtonSettings& newton, bool with_grad, std::size_t threads = 1);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_time = 0.0;
  std::size_t skipped = 0;
  double lr = 0.0;
  double probe_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated

  nlohmann::json to_json() const;
};

struct TrainOutputs {
  std::string metrics_path;     // JSON lines; empty to skip
  std::string checkpoint_path;  // empty to skip
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> history;
  double initial_probe_loss = 0.0;
  double final_probe_loss = 0.0;
  std::size_t total_skipped = 0;
};

/// Fills unset transformer normalisation entries from the data.
void fit_normalization(nlohmann::json& model_config, const Dataset& data);

/// The checkpoint metadata records the mesh, so forecasts can rebuild it.
TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOutputs& outputs = {},
                  const std::function<void(const StepRecord&)>& on_step = {});

/// Continues from an existing model (e.g. a checkpoint) instead of a fresh one.
TrainResult train(const TrainConfig& config, const Dataset& data, const Checkpoint& start,
                  const TrainOutputs& outputs = {}, const std::function<void(const StepRecord&)>& on_step = {});

/// Number of worker threads: `requested`, or HMTI_THREADS when requested is 0.
std::size_t resolve_threads(std::size_t requested);

}  // namespace hmti
