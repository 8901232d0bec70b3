#include "hmti/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hmti/errors.hpp"

namespace hmti {

SwitchingStatistics switching_statistics(const Trajectory& traj, const SwitchingSettings& cfg) {
  if (cfg.component < 0 || cfg.component >= traj.dim()) throw ConfigError("switching_statistics: bad component");
  SwitchingStatistics s;
  const auto x = traj.state.col(cfg.component);
  int lobe = 0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double v = x(static_cast<Eigen::Index>(k));
    const int sgn = (v > 0.0) - (v < 0.0);
    if (sgn == 0) continue;
    if (lobe != 0 && sgn != lobe) {
      // Last sample with the old sign is the previous nonzero one; interpolate from k-1.
      const double a = x(static_cast<Eigen::Index>(k - 1));
      const double frac = a == v ? 0.0 : a / (a - v);
      s.switch_times.push_back(traj.t[k - 1] + frac * (traj.t[k] - traj.t[k - 1]));
    }
    lobe = sgn;
  }
  if (s.switch_times.size() < cfg.min_switches) {
    throw ConfigError("switching_statistics: only " + std::to_string(s.switch_times.size()) + " switches (need " +
                      std::to_string(cfg.min_switches) + ")");
  }
  for (std::size_t k = 1; k < s.switch_times.size(); ++k) s.intervals.push_back(s.switch_times[k] - s.switch_times[k - 1]);
  std::sort(s.intervals.begin(), s.intervals.end());
  for (double v : s.intervals) {
    if (v >= cfg.min_interval) s.used.push_back(v);
  }
  if (s.used.size() < 2) throw ConfigError("switching_statistics: fewer than two intervals above the cutoff");

  s.shift = cfg.min_interval;
  double excess = 0.0;
  for (double v : s.used) excess += v - s.shift;
  const auto n = static_cast<double>(s.used.size());
  s.rate = excess > 0.0 ? n / excess : std::numeric_limits<double>::infinity();

  const double lo = s.used.front(), hi = s.used.back();
  const std::size_t bins = std::max<std::size_t>(1, cfg.n_bins);
  s.bin_edges.resize(bins + 1);
  s.bin_counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) s.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  for (double v : s.used) {
    std::size_t b = hi > lo ? static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins)) : 0;
    s.bin_counts[std::min(b, bins - 1)]++;
  }

  for (std::size_t k = 0; k < s.used.size(); ++k) {
    const double f = std::isfinite(s.rate) ? 1.0 - std::exp(-s.rate * (s.used[k] - s.shift)) : 1.0;
    s.ks_d_plus = std::max(s.ks_d_plus, static_cast<double>(k + 1) / n - f);
    s.ks_d_minus = std::max(s.ks_d_minus, f - static_cast<double>(k) / n);
  }
  s.ks_p_value = std::exp(-2.0 * n * s.ks_d_plus * s.ks_d_plus);
  s.ks_pass = s.ks_p_value >= cfg.significance;
  return s;
}

nlohmann::json SwitchingStatistics::to_json(bool include_intervals) const {
  nlohmann::json j = {{"n_switches", switch_times.size()},
                      {"n_intervals", intervals.size()},
                      {"n_used", used.size()},
                      {"rate", rate},
                      {"shift", shift},
                      {"mean_interval", used.empty() ? 0.0 : shift + (rate > 0.0 ? 1.0 / rate : 0.0)},
                      {"ks_d_plus", ks_d_plus},
                      {"ks_d_minus", ks_d_minus},
                      {"ks_p_value", ks_p_value},
                      {"ks_pass", ks_pass},
                      {"bin_edges", bin_edges},
                      {"bin_counts", bin_counts}};
  if (include_intervals) j["intervals"] = intervals;
  return j;
}

}  // namespace hmti
