#pragma once

// Trajectory generation, CSV I/O and random window sampling for training.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmti/nonlinearity.hpp"

namespace hmti {

/// Uniformly sampled trajectory. `rate` holds the exact time derivative when
/// the generator knows it (same shape as `state`), otherwise it is empty.
struct Trajectory {
  std::vector<double> t;
  Eigen::MatrixXd state;  // samples x d
  Eigen::MatrixXd rate;   // samples x d or 0 x 0

  Eigen::Index dim() const { return state.cols(); }
  std::size_t size() const { return t.size(); }
  /// Sample spacing; throws ConfigError unless uniform to 1e-9 relative.
  double dt() const;
  bool has_rate() const { return rate.rows() == state.rows() && rate.size() > 0; }
};

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& x, const LorenzParams& p);

/// Classic RK4 at fixed dt from `ic`. A nonzero `ic_jitter` adds a uniform
/// perturbation of that size to the initial condition, drawn from `seed`.
Trajectory generate_lorenz(const LorenzParams& p, double t_final, double dt, const Eigen::Vector3d& ic,
                           std::uint64_t seed = 0, double ic_jitter = 0.0);

/// Closed-form u'' = -omega^2 u - beta u' from u(0) = u0, u'(0) = v0.
/// Handles under-, critically and over-damped cases. `rate` is exact.
Trajectory generate_parametric_oscillator(double omega, double beta, double t_final, double dt, double u0,
                                          double v0);
/// Value and derivative of the same closed form at one time.
std::pair<double, double> damped_oscillator_exact(double omega, double beta, double u0, double v0, double t);

/// Header `t,u0,...,u{d-1}` and, when a rate is present, `j0,...,j{d-1}`.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory_csv(const std::string& path);

/// How data samples map to the unknowns of a window.
enum class Alignment {
  /// Sample k of a domain is cell k; the cell width equals the sample spacing.
  Left,
  /// Samples at half-cell spacing: even samples are nodes, odd samples are
  /// cell midpoints; the cell width is twice the sample spacing.
  Midpoint,
};

Alignment parse_alignment(const std::string& name);
std::string to_string(Alignment a);

struct WindowSpec {
  std::size_t n_domains = 1;
  std::size_t m_cells = 1;
  Alignment alignment = Alignment::Left;

  /// Number of samples a window touches, counting the initial sample.
  std::size_t span_samples() const;
  /// Cell width implied by the sample spacing.
  double cell_width(double sample_dt) const;
};

struct TrainingWindow {
  std::size_t source = 0;        // trajectory index within the dataset
  std::size_t start_index = 0;   // sample index of the initial condition
  double t_start = 0.0;
  Eigen::VectorXd u0, j0;
  std::vector<Eigen::MatrixXd> targets;    // per domain M x d
  std::vector<Eigen::MatrixXd> j_targets;  // per domain (M+1) x d, empty without a rate
  ConditioningVector z;
};

/// A set of trajectories, each with its own conditioning vector.
struct Dataset {
  std::vector<Trajectory> trajectories;
  std::vector<ConditioningVector> conditioning;

  void add(Trajectory traj, ConditioningVector z = {});
  double dt() const;
  Eigen::Index dim() const;
};

/// The window starting at sample `start` of trajectory `source`.
TrainingWindow make_window(const Dataset& data, std::size_t source, std::size_t start, const WindowSpec& spec);

/// `batch` windows: a uniformly random trajectory, then a uniformly random
/// start among those that fit.
std::vector<TrainingWindow> sample_windows(const Dataset& data, const WindowSpec& spec, std::size_t batch,
                                           std::mt19937_64& rng);

}  // namespace hmti
