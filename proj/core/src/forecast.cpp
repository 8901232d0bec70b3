#include "hmti/forecast.hpp"

#include "hmti/errors.hpp"

namespace hmti {

using Eigen::Index;

ForecastResult forecast(const NonlinearityModel& model, const LinearBlocks& blocks, const Eigen::VectorXd& u0,
                        const Eigen::VectorXd& v0, const ConditioningVector& z, std::size_t n_domains, double t0,
                        const NewtonSettings& settings) {
  ForecastResult out;
  const Rollout states =
      rollout(InterfaceState::FromInitialCondition(u0, v0), n_domains, model, z, blocks, settings, &out.stats);
  const Index m = static_cast<Index>(blocks.m_cells), d = model.state_dim();
  const auto n = static_cast<Index>(n_domains);
  const double h = blocks.h, dt = h * static_cast<double>(m);

  out.cells.t.resize(static_cast<std::size_t>(n * m));
  out.cells.state.resize(n * m, d);
  out.cells.rate.resize(n * m, d);
  out.interfaces.t.resize(static_cast<std::size_t>(n + 1));
  out.interfaces.state.resize(n + 1, d);
  out.interfaces.rate.resize(n + 1, d);
  out.interfaces.t[0] = t0;
  out.interfaces.state.row(0) = u0.transpose();
  out.interfaces.rate.row(0) = v0.transpose();
  for (Index i = 0; i < n; ++i) {
    const DomainState& s = states[static_cast<std::size_t>(i)];
    const DgP0Field avg = project_v_to_q(s.j, blocks);
    for (Index k = 0; k < m; ++k) {
      const Index r = i * m + k;
      out.cells.t[static_cast<std::size_t>(r)] = t0 + static_cast<double>(i) * dt + (static_cast<double>(k) + 0.5) * h;
      out.cells.state.row(r) = s.u.values.row(k);
      out.cells.rate.row(r) = avg.values.row(k);
    }
    out.interfaces.t[static_cast<std::size_t>(i + 1)] = t0 + static_cast<double>(i + 1) * dt;
    out.interfaces.state.row(i + 1) = s.mortars.lambda_out.transpose();
    out.interfaces.rate.row(i + 1) = s.j.values.row(m);
  }
  return out;
}

ForecastResult forecast(const Checkpoint& checkpoint, const Eigen::VectorXd& u0, const Eigen::VectorXd& v0,
                        const ConditioningVector& z, std::size_t n_domains, std::size_t m_cells, double h,
                        const NewtonSettings& settings) {
  const auto model = checkpoint.make_model();
  if (m_cells == 0 || !(h > 0.0)) {
    if (!checkpoint.metadata.contains("mesh")) {
      throw ConfigError("checkpoint has no mesh metadata; pass m_cells and h explicitly");
    }
    const auto& mesh = checkpoint.metadata.at("mesh");
    if (m_cells == 0) m_cells = mesh.at("m_cells").get<std::size_t>();
    if (!(h > 0.0)) h = mesh.at("h").get<double>();
  }
  return forecast(*model, assemble_blocks(m_cells, h), u0, v0, z, n_domains, 0.0, settings);
}

}  // namespace hmti
