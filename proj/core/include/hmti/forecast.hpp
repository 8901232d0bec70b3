#pragma once

// Long rollouts of a (trained) model decoded to cell-midpoint samples.

#include <cstddef>

#include <Eigen/Dense>

#include "hmti/checkpoint.hpp"
#include "hmti/data.hpp"
#include "hmti/mortar.hpp"

namespace hmti {

struct ForecastResult {
  /// One row per cell: t at the cell midpoint, state = u cell value,
  /// rate = cell average of J.
  Trajectory cells;
  /// Interface values (t_i, lambda, J) at every domain boundary, N+1 rows.
  Trajectory interfaces;
  RolloutStats stats;
};

ForecastResult forecast(const NonlinearityModel& model, const LinearBlocks& blocks, const Eigen::VectorXd& u0,
                        const Eigen::VectorXd& v0, const ConditioningVector& z, std::size_t n_domains,
                        double t0 = 0.0, const NewtonSettings& settings = {});

/// Mesh (M, h) taken from the checkpoint metadata unless overridden (m_cells = 0, h <= 0 keep it).
ForecastResult forecast(const Checkpoint& checkpoint, const Eigen::VectorXd& u0, const Eigen::VectorXd& v0,
                        const ConditioningVector& z, std::size_t n_domains, std::size_t m_cells = 0, double h = 0.0,
                        const NewtonSettings& settings = {});

}  // namespace hmti
