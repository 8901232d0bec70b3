#pragma once

// Inter-lobe switching statistics of a scalar signal (the Lorenz x component).

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmti/data.hpp"

namespace hmti {

/// Largest Lyapunov exponent of the standard Lorenz system and its inverse.
inline constexpr double kLorenzLyapunovExponent = 0.91;
inline constexpr double kLorenzLyapunovTime = 1.0 / kLorenzLyapunovExponent;

struct SwitchingSettings {
  Eigen::Index component = 0;
  /// Intervals shorter than this are dropped before fitting and testing.
  double min_interval = kLorenzLyapunovTime;
  std::size_t n_bins = 20;
  double significance = 0.01;
  std::size_t min_switches = 10;
};

struct SwitchingStatistics {
  std::vector<double> switch_times;
  std::vector<double> intervals;  // sorted, all of them
  std::vector<double> used;       // sorted, those >= min_interval
  std::vector<double> bin_edges;  // n_bins + 1
  std::vector<std::size_t> bin_counts;
  /// Shifted exponential fitted by maximum likelihood on `used`:
  /// F(x) = 1 - exp(-rate (x - shift)), shift = min_interval.
  double rate = 0.0;
  double shift = 0.0;
  /// One-sided KS statistic D+ = sup (F_n - F) and its asymptotic p-value exp(-2 n D+^2).
  double ks_d_plus = 0.0;
  double ks_d_minus = 0.0;
  double ks_p_value = 0.0;
  bool ks_pass = false;

  nlohmann::json to_json(bool include_intervals = false) const;
};

/// Lobe = sign of the chosen component; switch times by linear interpolation
/// between samples. Throws ConfigError with fewer than `min_switches` switches
/// or fewer than two usable intervals.
SwitchingStatistics switching_statistics(const Trajectory& traj, const SwitchingSettings& settings = {});

}  // namespace hmti
