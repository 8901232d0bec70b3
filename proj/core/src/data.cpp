#include "hmti/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hmti/errors.hpp"

namespace hmti {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double Trajectory::dt() const {
  if (t.size() < 2) throw ConfigError("trajectory needs at least two samples");
  const double step = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (std::abs((t[k] - t[k - 1]) - step) > 1e-6 * std::max(1.0, std::abs(step))) {
      throw ConfigError("trajectory is not uniformly sampled");
    }
  }
  return step;
}

Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& x, const LorenzParams& p) {
  return {p.sigma * (x(1) - x(0)), x(0) * (p.rho - x(2)) - x(1), x(0) * x(1) - p.beta * x(2)};
}

Trajectory generate_lorenz(const LorenzParams& p, double t_final, double dt, const Eigen::Vector3d& ic,
                           std::uint64_t seed, double ic_jitter) {
  if (!(dt > 0.0) || !(t_final >= 0.0)) throw ConfigError("generate_lorenz: need dt > 0 and t_final >= 0");
  const auto steps = static_cast<std::size_t>(std::llround(t_final / dt));
  Eigen::Vector3d x = ic;
  if (ic_jitter > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-ic_jitter, ic_jitter);
    for (int k = 0; k < 3; ++k) x(k) += d(rng);
  }
  Trajectory tr;
  tr.t.resize(steps + 1);
  tr.state.resize(static_cast<Index>(steps + 1), 3);
  tr.rate.resize(static_cast<Index>(steps + 1), 3);
  for (std::size_t s = 0; s <= steps; ++s) {
    const auto r = static_cast<Index>(s);
    tr.t[s] = static_cast<double>(s) * dt;
    tr.state.row(r) = x.transpose();
    tr.rate.row(r) = lorenz_rhs(x, p).transpose();
    if (s == steps) break;
    const Eigen::Vector3d k1 = lorenz_rhs(x, p);
    const Eigen::Vector3d k2 = lorenz_rhs(x + 0.5 * dt * k1, p);
    const Eigen::Vector3d k3 = lorenz_rhs(x + 0.5 * dt * k2, p);
    const Eigen::Vector3d k4 = lorenz_rhs(x + dt * k3, p);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw NonFiniteError("generate_lorenz: trajectory blew up");
  }
  return tr;
}

std::pair<double, double> damped_oscillator_exact(double omega, double beta, double u0, double v0, double t) {
  const double g = 0.5 * beta;
  const double disc = g * g - omega * omega;
  const double scale = std::max(1.0, omega * omega);
  if (std::abs(disc) <= 1e-14 * scale) {
    // Critical: u = e^{-g t} (u0 + (v0 + g u0) t)
    const double c = v0 + g * u0;
    const double e = std::exp(-g * t);
    return {e * (u0 + c * t), e * (c - g * (u0 + c * t))};
  }
  if (disc < 0.0) {
    const double wd = std::sqrt(-disc);
    const double b = (v0 + g * u0) / wd;
    const double e = std::exp(-g * t), cs = std::cos(wd * t), sn = std::sin(wd * t);
    const double u = e * (u0 * cs + b * sn);
    return {u, -g * u + e * wd * (-u0 * sn + b * cs)};
  }
  const double sq = std::sqrt(disc);
  const double r1 = -g + sq, r2 = -g - sq;
  const double a = (v0 - r2 * u0) / (r1 - r2);
  const double b = u0 - a;
  const double e1 = std::exp(r1 * t), e2 = std::exp(r2 * t);
  return {a * e1 + b * e2, a * r1 * e1 + b * r2 * e2};
}

Trajectory generate_parametric_oscillator(double omega, double beta, double t_final, double dt, double u0,
                                          double v0) {
  if (!(dt > 0.0) || !(t_final >= 0.0)) throw ConfigError("generate_parametric_oscillator: need dt > 0");
  if (!(omega >= 0.0) || !(beta >= 0.0)) throw ConfigError("generate_parametric_oscillator: need omega, beta >= 0");
  const auto steps = static_cast<std::size_t>(std::llround(t_final / dt));
  Trajectory tr;
  tr.t.resize(steps + 1);
  tr.state.resize(static_cast<Index>(steps + 1), 1);
  tr.rate.resize(static_cast<Index>(steps + 1), 1);
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) * dt;
    const auto [u, v] = damped_oscillator_exact(omega, beta, u0, v0, t);
    tr.t[s] = t;
    tr.state(static_cast<Index>(s), 0) = u;
    tr.rate(static_cast<Index>(s), 0) = v;
  }
  return tr;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  const Index d = traj.dim();
  const bool rate = traj.has_rate();
  out << "t";
  for (Index k = 0; k < d; ++k) out << ",u" << k;
  if (rate) {
    for (Index k = 0; k < d; ++k) out << ",j" << k;
  }
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const auto r = static_cast<Index>(s);
    out << traj.t[s];
    for (Index k = 0; k < d; ++k) out << ',' << traj.state(r, k);
    if (rate) {
      for (Index k = 0; k < d; ++k) out << ',' << traj.rate(r, k);
    }
    out << '\n';
  }
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("'" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header[0] != "t") throw ConfigError("'" + path + "': header must start with t");
  Index d = 0, dj = 0;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const std::string& h = header[k];
    const bool is_u = h == "u" + std::to_string(d) && dj == 0;
    const bool is_j = h == "j" + std::to_string(dj);
    if (is_u) {
      ++d;
    } else if (is_j) {
      ++dj;
    } else {
      throw ConfigError("'" + path + "': unexpected column '" + h + "'");
    }
  }
  if (d == 0 || (dj != 0 && dj != d)) throw ConfigError("'" + path + "': bad column layout");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("'" + path + "' line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != header.size()) {
      throw ConfigError("'" + path + "' line " + std::to_string(line_no) + ": wrong number of columns");
    }
    rows.push_back(std::move(row));
  }
  Trajectory tr;
  const auto n = static_cast<Index>(rows.size());
  tr.t.resize(rows.size());
  tr.state.resize(n, d);
  if (dj > 0) tr.rate.resize(n, d);
  for (Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    tr.t[static_cast<std::size_t>(r)] = row[0];
    for (Index k = 0; k < d; ++k) tr.state(r, k) = row[static_cast<std::size_t>(1 + k)];
    for (Index k = 0; k < dj; ++k) tr.rate(r, k) = row[static_cast<std::size_t>(1 + d + k)];
  }
  if (!tr.state.allFinite() || (dj > 0 && !tr.rate.allFinite())) throw NonFiniteError("'" + path + "': non-finite data");
  return tr;
}

Alignment parse_alignment(const std::string& name) {
  if (name == "left") return Alignment::Left;
  if (name == "midpoint") return Alignment::Midpoint;
  throw ConfigError("unknown alignment '" + name + "' (expected left or midpoint)");
}

std::string to_string(Alignment a) { return a == Alignment::Left ? "left" : "midpoint"; }

std::size_t WindowSpec::span_samples() const {
  const std::size_t cells = n_domains * m_cells;
  return (alignment == Alignment::Left ? cells : 2 * cells) + 1;
}

double WindowSpec::cell_width(double sample_dt) const {
  return alignment == Alignment::Left ? sample_dt : 2.0 * sample_dt;
}

void Dataset::add(Trajectory traj, ConditioningVector z) {
  if (!trajectories.empty()) {
    if (traj.dim() != dim()) throw ShapeError("dataset: trajectories differ in state dimension");
    if (z.size() != conditioning.front().size()) throw ShapeError("dataset: conditioning sizes differ");
    if (std::abs(traj.dt() - dt()) > 1e-9 * dt()) throw ConfigError("dataset: trajectories differ in sample spacing");
  }
  trajectories.push_back(std::move(traj));
  conditioning.push_back(std::move(z));
}

double Dataset::dt() const {
  if (trajectories.empty()) throw ConfigError("dataset is empty");
  return trajectories.front().dt();
}

Index Dataset::dim() const {
  if (trajectories.empty()) throw ConfigError("dataset is empty");
  return trajectories.front().dim();
}

namespace {

// Exact rate if present, else central differences (one-sided at the ends).
VectorXd rate_at(const Trajectory& tr, std::size_t s, double dt) {
  if (tr.has_rate()) return tr.rate.row(static_cast<Index>(s)).transpose();
  const std::size_t n = tr.size();
  const std::size_t lo = s == 0 ? 0 : s - 1;
  const std::size_t hi = s + 1 >= n ? n - 1 : s + 1;
  return (tr.state.row(static_cast<Index>(hi)) - tr.state.row(static_cast<Index>(lo))).transpose() /
         (static_cast<double>(hi - lo) * dt);
}

}  // namespace

TrainingWindow make_window(const Dataset& data, std::size_t source, std::size_t start, const WindowSpec& spec) {
  if (source >= data.trajectories.size()) throw ConfigError("make_window: trajectory index out of range");
  const Trajectory& tr = data.trajectories[source];
  if (tr.size() < spec.span_samples() || start > tr.size() - spec.span_samples()) {
    throw ConfigError("trajectory too short for a window of " + std::to_string(spec.span_samples()) + " samples");
  }
  const double dt = tr.dt();
  const Index m = static_cast<Index>(spec.m_cells), d = tr.dim();
  const std::size_t stride = spec.alignment == Alignment::Left ? 1 : 2;
  const std::size_t cell_offset = spec.alignment == Alignment::Left ? 0 : 1;

  TrainingWindow w;
  w.source = source;
  w.start_index = start;
  w.t_start = tr.t[start];
  w.u0 = tr.state.row(static_cast<Index>(start)).transpose();
  w.j0 = rate_at(tr, start, dt);
  w.z = data.conditioning[source];
  for (std::size_t i = 0; i < spec.n_domains; ++i) {
    MatrixXd target(m, d);
    MatrixXd jt(m + 1, d);
    for (Index k = 0; k <= m; ++k) {
      const std::size_t node = start + stride * (i * spec.m_cells + static_cast<std::size_t>(k));
      if (k < m) target.row(k) = tr.state.row(static_cast<Index>(node + cell_offset));
      jt.row(k) = rate_at(tr, node, dt).transpose();
    }
    w.targets.push_back(std::move(target));
    w.j_targets.push_back(std::move(jt));
  }
  return w;
}

std::vector<TrainingWindow> sample_windows(const Dataset& data, const WindowSpec& spec, std::size_t batch,
                                           std::mt19937_64& rng) {
  if (data.trajectories.empty()) throw ConfigError("sample_windows: empty dataset");
  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < data.trajectories.size(); ++k) {
    if (data.trajectories[k].size() >= spec.span_samples()) usable.push_back(k);
  }
  if (usable.empty()) {
    throw ConfigError("trajectory too short: a window needs " + std::to_string(spec.span_samples()) + " samples");
  }
  std::vector<TrainingWindow> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t src = usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
    const std::size_t last = data.trajectories[src].size() - spec.span_samples();
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, last)(rng);
    out.push_back(make_window(data, src, start, spec));
  }
  return out;
}

}  // namespace hmti
