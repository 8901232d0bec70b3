#include "hmti/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

namespace hmti {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
  if (n_domains == 0 || m_cells == 0) throw ConfigError("train: n_domains and m_cells must be positive");
  if (steps == 0 || batch_size == 0) throw ConfigError("train: steps and batch_size must be positive");
  if (!(optimizer.lr > 0.0) || !(optimizer.eps > 0.0) || optimizer.weight_decay < 0.0) {
    throw ConfigError("train: invalid optimizer settings");
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("train: moment decays must lie in [0, 1)");
  }
  if (j_loss_weight < 0.0) throw ConfigError("train: j_loss_weight must be non-negative");
  if (!model.is_object() || !model.contains("kind")) throw ConfigError("train: model config needs a kind");
  newton.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"n_domains", n_domains},
          {"m_cells", m_cells},
          {"alignment", to_string(alignment)},
          {"model", model},
          {"auto_normalize", auto_normalize},
          {"lr", optimizer.lr},
          {"beta1", optimizer.beta1},
          {"beta2", optimizer.beta2},
          {"adam_eps", optimizer.eps},
          {"weight_decay", optimizer.weight_decay},
          {"cosine", optimizer.cosine},
          {"lr_floor", optimizer.lr_floor},
          {"grad_clip", optimizer.grad_clip},
          {"steps", steps},
          {"batch_size", batch_size},
          {"loss", to_string(loss)},
          {"j_loss_weight", j_loss_weight},
          {"seed", seed},
          {"probe_size", probe_size},
          {"probe_every", probe_every},
          {"checkpoint_every", checkpoint_every},
          {"threads", threads},
          {"newton_rel_tol", newton.rel_tol},
          {"newton_abs_tol", newton.abs_tol},
          {"newton_max_iters", newton.max_iters},
          {"newton_halvings", newton.damping_halvings}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const std::set<std::string> known = {
      "n_domains", "m_cells",  "alignment", "model",       "auto_normalize", "lr",          "beta1",
      "beta2",     "adam_eps", "weight_decay", "cosine",   "lr_floor",       "grad_clip",   "steps",
      "batch_size", "loss",    "j_loss_weight", "seed",    "probe_size",     "probe_every", "checkpoint_every",
      "threads",   "newton_rel_tol", "newton_abs_tol", "newton_max_iters", "newton_halvings",
      "data",      "metrics",  "checkpoint"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError("train config: unknown key '" + item.key() + "'");
  }
  TrainConfig c;
  try {
    c.n_domains = j.value("n_domains", c.n_domains);
    c.m_cells = j.value("m_cells", c.m_cells);
    c.alignment = parse_alignment(j.value("alignment", to_string(c.alignment)));
    c.model = j.value("model", c.model);
    c.auto_normalize = j.value("auto_normalize", c.auto_normalize);
    c.optimizer.lr = j.value("lr", c.optimizer.lr);
    c.optimizer.beta1 = j.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = j.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = j.value("adam_eps", c.optimizer.eps);
    c.optimizer.weight_decay = j.value("weight_decay", c.optimizer.weight_decay);
    c.optimizer.cosine = j.value("cosine", c.optimizer.cosine);
    c.optimizer.lr_floor = j.value("lr_floor", c.optimizer.lr_floor);
    c.optimizer.grad_clip = j.value("grad_clip", c.optimizer.grad_clip);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.loss = parse_loss_kind(j.value("loss", to_string(c.loss)));
    c.j_loss_weight = j.value("j_loss_weight", c.j_loss_weight);
    c.seed = j.value("seed", c.seed);
    c.probe_size = j.value("probe_size", c.probe_size);
    c.probe_every = j.value("probe_every", c.probe_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.threads = j.value("threads", c.threads);
    c.newton.rel_tol = j.value("newton_rel_tol", c.newton.rel_tol);
    c.newton.abs_tol = j.value("newton_abs_tol", c.newton.abs_tol);
    c.newton.max_iters = j.value("newton_max_iters", c.newton.max_iters);
    c.newton.damping_halvings = j.value("newton_halvings", c.newton.damping_halvings);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json AdamState::to_json() const {
  return {{"step", step}, {"m", vector_to_json(m)}, {"v", vector_to_json(v)}};
}

AdamState AdamState::from_json(const nlohmann::json& j) {
  AdamState s;
  s.step = j.at("step").get<std::uint64_t>();
  s.m = vector_from_json(j.at("m"));
  s.v = vector_from_json(j.at("v"));
  return s;
}

double adam_update(VectorXd& theta, const VectorXd& grad, AdamState& s, const OptimizerConfig& cfg,
                   std::size_t total_steps) {
  if (s.m.size() != theta.size()) {
    s.m = VectorXd::Zero(theta.size());
    s.v = VectorXd::Zero(theta.size());
  }
  double lr = cfg.lr;
  if (cfg.cosine && total_steps > 0) {
    const double progress = std::min(1.0, static_cast<double>(s.step) / static_cast<double>(total_steps));
    lr = cfg.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
  }
  ++s.step;
  s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * grad;
  s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  const VectorXd step = (s.m / c1).array() / ((s.v / c2).array().sqrt() + cfg.eps);
  theta -= lr * (step + cfg.weight_decay * theta);
  return lr;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HMTI_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

namespace {

struct WindowOutcome {
  bool ok = false;
  double loss = 0.0;
  VectorXd grad;
  std::string failure;
};

WindowOutcome run_window(const NonlinearityModel& model, const TrainingWindow& w, const WindowSpec& spec,
                         const LinearBlocks& blocks, LossKind loss, double j_weight, const NewtonSettings& newton,
                         bool with_grad) {
  WindowOutcome out;
  try {
    const InterfaceState y0 = InterfaceState::FromInitialCondition(w.u0, w.j0);
    const Rollout states = rollout(y0, spec.n_domains, model, w.z, blocks, newton);
    LossSpec ls;
    ls.kind = loss;
    ls.targets = w.targets;
    if (j_weight > 0.0) {
      ls.j_targets = w.j_targets;
      ls.j_weight = j_weight;
    }
    const LossResult lr = loss_and_cotangents(states, ls);
    out.loss = lr.value;
    if (with_grad) out.grad = backward(states, y0, model, w.z, blocks, lr.cotangents);
    out.ok = std::isfinite(out.loss) && (!with_grad || out.grad.allFinite());
    if (!out.ok) out.failure = "non-finite loss or gradient";
  } catch (const Error& e) {
    out.failure = std::string(e.kind()) + ": " + e.what();
  }
  return out;
}

}  // namespace

BatchResult evaluate_batch(const NonlinearityModel& model, const std::vector<TrainingWindow>& windows,
                           const WindowSpec& spec, double h, LossKind loss, double j_weight,
                           const NewtonSettings& newton, bool with_grad, std::size_t threads) {
  const LinearBlocks blocks = assemble_blocks(spec.m_cells, h);
  std::vector<WindowOutcome> outcomes(windows.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, windows.size()));
  auto work = [&](std::size_t first) {
    for (std::size_t k = first; k < windows.size(); k += workers) {
      outcomes[k] = run_window(model, windows[k], spec, blocks, loss, j_weight, newton, with_grad);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }

  BatchResult r;
  r.grad = VectorXd::Zero(model.num_params());
  for (const auto& o : outcomes) {  // fixed order
    if (!o.ok) {
      ++r.skipped;
      r.failures.push_back(o.failure);
      continue;
    }
    ++r.used;
    r.loss += o.loss;
    if (with_grad) r.grad += o.grad;
  }
  if (r.used > 0) {
    r.loss /= static_cast<double>(r.used);
    r.grad /= static_cast<double>(r.used);
  }
  return r;
}

nlohmann::json StepRecord::to_json() const {
  nlohmann::json j = {{"step", step},          {"loss", loss},       {"grad_norm", grad_norm},
                      {"wall_time", wall_time}, {"skipped", skipped}, {"lr", lr}};
  j["probe_loss"] = std::isfinite(probe_loss) ? nlohmann::json(probe_loss) : nlohmann::json(nullptr);
  return j;
}

namespace {

double stddev(const MatrixXd& x, Index col, double fallback) {
  const double mean = x.col(col).mean();
  const double var = (x.col(col).array() - mean).square().mean();
  const double s = std::sqrt(var);
  return s > 1e-12 ? s : fallback;
}

}  // namespace

void fit_normalization(nlohmann::json& cfg, const Dataset& data) {
  if (cfg.value("kind", std::string()) != "local_transformer") return;
  const Index d = data.dim();
  const Index p = data.conditioning.empty() ? 0 : data.conditioning.front().size();
  if (!cfg.contains("state_dim")) cfg["state_dim"] = d;
  if (!cfg.contains("conditioning_dim")) cfg["conditioning_dim"] = p;

  // Stack all samples, rates and second derivatives.
  Index rows = 0;
  for (const auto& t : data.trajectories) rows += static_cast<Index>(t.size());
  MatrixXd u(rows, d), v(rows, d), a(rows, d);
  const double dt = data.dt();
  Index r = 0;
  for (const auto& t : data.trajectories) {
    const auto n = static_cast<Index>(t.size());
    MatrixXd rate = t.has_rate() ? t.rate : MatrixXd(MatrixXd::Zero(n, d));
    if (!t.has_rate()) {
      for (Index k = 0; k < n; ++k) {
        const Index lo = std::max<Index>(0, k - 1), hi = std::min(n - 1, k + 1);
        rate.row(k) = (t.state.row(hi) - t.state.row(lo)) / (static_cast<double>(hi - lo) * dt);
      }
    }
    for (Index k = 0; k < n; ++k) {
      const Index lo = std::max<Index>(0, k - 1), hi = std::min(n - 1, k + 1);
      a.row(r + k) = (rate.row(hi) - rate.row(lo)) / (static_cast<double>(std::max<Index>(1, hi - lo)) * dt);
    }
    u.middleRows(r, n) = t.state;
    v.middleRows(r, n) = rate;
    r += n;
  }
  auto fill = [&](const char* key, auto value_of) {
    if (cfg.contains(key)) return;
    std::vector<double> vals;
    for (Index k = 0; k < d; ++k) vals.push_back(value_of(k));
    cfg[key] = vals;
  };
  fill("u_shift", [&](Index k) { return u.col(k).mean(); });
  fill("u_scale", [&](Index k) { return stddev(u, k, 1.0); });
  fill("j_scale", [&](Index k) { return stddev(v, k, 1.0); });
  fill("out_scale", [&](Index k) { return stddev(a, k, 1.0); });
  if (p > 0) {
    std::vector<double> shift(static_cast<std::size_t>(p)), scale(static_cast<std::size_t>(p));
    for (Index k = 0; k < p; ++k) {
      double lo = data.conditioning.front().z(k), hi = lo;
      for (const auto& z : data.conditioning) {
        lo = std::min(lo, z.z(k));
        hi = std::max(hi, z.z(k));
      }
      shift[static_cast<std::size_t>(k)] = 0.5 * (lo + hi);
      scale[static_cast<std::size_t>(k)] = hi > lo ? 0.5 * (hi - lo) : 1.0;
    }
    if (!cfg.contains("z_shift")) cfg["z_shift"] = shift;
    if (!cfg.contains("z_scale")) cfg["z_scale"] = scale;
  }
}

namespace {

TrainResult train_impl(const TrainConfig& config, const Dataset& data, std::unique_ptr<NonlinearityModel> model,
                       AdamState opt, const TrainOutputs& outputs,
                       const std::function<void(const StepRecord&)>& on_step) {
  const WindowSpec spec{config.n_domains, config.m_cells, config.alignment};
  const double h = spec.cell_width(data.dt());
  const std::size_t threads = resolve_threads(config.threads);
  if (model->state_dim() != data.dim()) throw ShapeError("train: model and data state dimensions differ");

  std::mt19937_64 rng(config.seed);
  std::mt19937_64 probe_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto probe = sample_windows(data, spec, std::max<std::size_t>(1, config.probe_size), probe_rng);

  std::ofstream metrics;
  if (!outputs.metrics_path.empty()) {
    metrics.open(outputs.metrics_path);
    if (!metrics) throw ConfigError("cannot open metrics file '" + outputs.metrics_path + "'");
  }

  const nlohmann::json mesh = {{"n_domains", config.n_domains},
                               {"m_cells", config.m_cells},
                               {"h", h},
                               {"delta_t", h * static_cast<double>(config.m_cells)},
                               {"alignment", to_string(config.alignment)},
                               {"data_dt", data.dt()}};
  TrainResult result;
  auto make_checkpoint = [&](std::size_t steps_done, double last_loss) {
    Checkpoint c = Checkpoint::from_model(*model);
    c.optimizer = {{"kind", "adamw"}, {"state", opt.to_json()}};
    c.metadata = {{"mesh", mesh},
                  {"steps", steps_done},
                  {"final_loss", last_loss},
                  {"seed", config.seed},
                  {"initial_probe_loss", result.initial_probe_loss},
                  {"total_skipped", result.total_skipped},
                  {"train_config", config.to_json()}};
    return c;
  };
  auto probe_loss = [&]() {
    const BatchResult b = evaluate_batch(*model, probe, spec, h, config.loss, config.j_loss_weight, config.newton,
                                         false, threads);
    return b.used > 0 ? b.loss : std::numeric_limits<double>::quiet_NaN();
  };

  const auto t_begin = std::chrono::steady_clock::now();
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t step = 0; step < config.steps; ++step) {
    StepRecord rec;
    rec.step = step;
    if (config.probe_every > 0 && step % config.probe_every == 0) {
      rec.probe_loss = probe_loss();
      if (step == 0) result.initial_probe_loss = rec.probe_loss;
    }
    const auto batch = sample_windows(data, spec, config.batch_size, rng);
    BatchResult b = evaluate_batch(*model, batch, spec, h, config.loss, config.j_loss_weight, config.newton, true,
                                   threads);
    result.total_skipped += b.skipped;
    if (2 * b.skipped > batch.size()) {
      std::string msg = "step " + std::to_string(step) + ": " + std::to_string(b.skipped) + " of " +
                        std::to_string(batch.size()) + " windows failed";
      if (!b.failures.empty()) msg += " (first: " + b.failures.front() + ")";
      throw TrainingAborted(msg);
    }
    rec.loss = b.loss;
    rec.grad_norm = b.grad.norm();
    rec.skipped = b.skipped;
    if (config.optimizer.grad_clip > 0.0 && rec.grad_norm > config.optimizer.grad_clip) {
      b.grad *= config.optimizer.grad_clip / rec.grad_norm;
    }
    VectorXd theta = model->params();
    rec.lr = adam_update(theta, b.grad, opt, config.optimizer, config.steps);
    model->set_params(theta);
    last_loss = b.loss;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    if (metrics.is_open()) metrics << rec.to_json().dump() << '\n' << std::flush;
    if (on_step) on_step(rec);
    result.history.push_back(rec);
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && !outputs.checkpoint_path.empty()) {
      save_checkpoint(make_checkpoint(step + 1, last_loss), outputs.checkpoint_path);
    }
  }
  result.final_probe_loss = probe_loss();
  if (metrics.is_open()) {
    metrics << nlohmann::json{{"step", config.steps}, {"final", true}, {"probe_loss", result.final_probe_loss}}.dump()
            << '\n';
  }
  result.checkpoint = make_checkpoint(config.steps, last_loss);
  result.checkpoint.metadata["final_probe_loss"] = result.final_probe_loss;
  if (!outputs.checkpoint_path.empty()) save_checkpoint(result.checkpoint, outputs.checkpoint_path);
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOutputs& outputs,
                  const std::function<void(const StepRecord&)>& on_step) {
  config.validate();
  nlohmann::json model_cfg = config.model;
  if (config.auto_normalize) fit_normalization(model_cfg, data);
  return train_impl(config, data, make_model(model_cfg), AdamState{}, outputs, on_step);
}

TrainResult train(const TrainConfig& config, const Dataset& data, const Checkpoint& start, const TrainOutputs& outputs,
                  const std::function<void(const StepRecord&)>& on_step) {
  config.validate();
  AdamState opt;
  if (start.optimizer.contains("state")) opt = AdamState::from_json(start.optimizer.at("state"));
  return train_impl(config, data, start.make_model(), opt, outputs, on_step);
}

}  // namespace hmti
