// Command line front end: data generation, simulation, training, forecasting,
// diagnostics and switching statistics. Results go to stdout as JSON; failures
// print a JSON error record to stderr and exit nonzero.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hmti/hmti.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCheckFailed = 3;

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// `spec` is inline JSON when it starts with '{', otherwise a file path.
json read_json_spec(const std::string& spec) {
  const auto first = spec.find_first_not_of(" \t\n");
  if (first != std::string::npos && spec[first] == '{') {
    try {
      return json::parse(spec);
    } catch (const json::exception& e) {
      throw hmti::ConfigError(std::string("malformed inline JSON: ") + e.what());
    }
  }
  return hmti::read_json_file(spec);
}

struct ModelSource {
  std::string model;
  std::string checkpoint;
  std::vector<double> theta;

  void add_options(CLI::App* app) {
    auto* m = app->add_option("--model", model, "Model config: inline JSON or a JSON file");
    auto* c = app->add_option("--checkpoint", checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
    m->excludes(c);
    app->add_option("--theta", theta, "Parameter vector for --model (comma separated)")->delimiter(',');
  }

  std::unique_ptr<hmti::NonlinearityModel> load(std::optional<hmti::Checkpoint>* ckpt = nullptr) const {
    if (!checkpoint.empty()) {
      hmti::Checkpoint c = hmti::load_checkpoint(checkpoint);
      auto m = c.make_model();
      if (ckpt) *ckpt = std::move(c);
      return m;
    }
    if (model.empty()) throw hmti::ConfigError("one of --model or --checkpoint is required");
    return hmti::make_model(read_json_spec(model), to_vector(theta));
  }
};

/// Mesh from flags, falling back to checkpoint metadata.
struct MeshOptions {
  std::size_t m_cells = 0;
  double h = 0.0;

  void add_options(CLI::App* app) {
    app->add_option("--m", m_cells, "Cells per domain");
    app->add_option("--h", h, "Cell width");
  }

  hmti::LinearBlocks blocks(const std::optional<hmti::Checkpoint>& ckpt) const {
    std::size_t m = m_cells;
    double hh = h;
    if (ckpt && ckpt->metadata.contains("mesh")) {
      const json& mesh = ckpt->metadata.at("mesh");
      if (m == 0) m = mesh.value("m_cells", std::size_t{0});
      if (hh == 0.0) hh = mesh.value("h", 0.0);
    }
    if (m == 0 || !(hh > 0.0)) throw hmti::ConfigError("mesh needs --m and --h (or a checkpoint with mesh metadata)");
    return hmti::assemble_blocks(m, hh);
  }
};

void require_dim(const std::vector<double>& v, Eigen::Index d, const char* name) {
  if (static_cast<Eigen::Index>(v.size()) != d) {
    throw hmti::ShapeError(std::string(name) + " has " + std::to_string(v.size()) + " entries, model state dim is " +
                           std::to_string(d));
  }
}

void write_forecast(const hmti::ForecastResult& f, const std::string& out, const std::string& interfaces) {
  if (!out.empty()) hmti::write_trajectory_csv(f.cells, out);
  if (!interfaces.empty()) hmti::write_trajectory_csv(f.interfaces, interfaces);
}

json forecast_summary(const hmti::ForecastResult& f) {
  const auto& s = f.cells.state;
  return {{"n_cells", f.cells.size()},
          {"n_domains", f.stats.domains.size()},
          {"t_end", f.cells.t.empty() ? 0.0 : f.cells.t.back()},
          {"max", std::vector<double>(s.colwise().maxCoeff().begin(), s.colwise().maxCoeff().end())},
          {"min", std::vector<double>(s.colwise().minCoeff().begin(), s.colwise().minCoeff().end())},
          {"newton_total_iterations", f.stats.total_iterations()},
          {"newton_max_iterations", f.stats.max_iterations()}};
}

// ---- datagen ---------------------------------------------------------------

void add_datagen(CLI::App& app) {
  auto* dg = app.add_subcommand("datagen", "Generate reference trajectories");
  dg->require_subcommand(1);

  struct LorenzOpts {
    double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
    double t_final = 100.0, dt = 0.01, discard = 0.0, jitter = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> ic{1.0, 1.0, 1.0};
    std::string out;
  };
  auto lo = std::make_shared<LorenzOpts>();
  auto* lz = dg->add_subcommand("lorenz", "Lorenz-63 trajectory by fixed-step RK4");
  lz->add_option("--sigma", lo->sigma)->capture_default_str();
  lz->add_option("--rho", lo->rho)->capture_default_str();
  lz->add_option("--beta", lo->beta)->capture_default_str();
  lz->add_option("--t-final", lo->t_final, "Integrated time after the discarded transient")->capture_default_str();
  lz->add_option("--dt", lo->dt)->capture_default_str();
  lz->add_option("--discard", lo->discard, "Initial transient to drop")->capture_default_str();
  lz->add_option("--ic", lo->ic, "Initial condition x,y,z")->delimiter(',')->expected(3);
  lz->add_option("--jitter", lo->jitter, "Uniform IC perturbation amplitude")->capture_default_str();
  lz->add_option("--seed", lo->seed)->capture_default_str();
  lz->add_option("--out", lo->out, "Output CSV")->required();
  lz->callback([lo] {
    const hmti::LorenzParams p{lo->sigma, lo->rho, lo->beta};
    hmti::Trajectory tr = hmti::generate_lorenz(p, lo->t_final + lo->discard, lo->dt,
                                                Eigen::Vector3d(lo->ic[0], lo->ic[1], lo->ic[2]), lo->seed, lo->jitter);
    if (lo->discard > 0.0) {
      const auto skip = static_cast<std::size_t>(std::llround(lo->discard / lo->dt));
      const auto keep = static_cast<Eigen::Index>(tr.size() - skip);
      hmti::Trajectory cut;
      cut.t.assign(tr.t.begin() + static_cast<std::ptrdiff_t>(skip), tr.t.end());
      cut.state = tr.state.bottomRows(keep);
      cut.rate = tr.rate.bottomRows(keep);
      tr = std::move(cut);
    }
    hmti::write_trajectory_csv(tr, lo->out);
    emit({{"written", lo->out}, {"samples", tr.size()}, {"dt", lo->dt}});
  });

  struct OscOpts {
    double omega = 1.0, beta = 0.0, t_final = 10.0, dt = 0.01, u0 = 1.0, v0 = 0.0;
    std::string out;
  };
  auto oo = std::make_shared<OscOpts>();
  auto* os = dg->add_subcommand("oscillator", "Closed-form damped oscillator u'' = -omega^2 u - beta u'");
  os->add_option("--omega", oo->omega)->capture_default_str();
  os->add_option("--beta", oo->beta)->capture_default_str();
  os->add_option("--t-final", oo->t_final)->capture_default_str();
  os->add_option("--dt", oo->dt)->capture_default_str();
  os->add_option("--u0", oo->u0)->capture_default_str();
  os->add_option("--v0", oo->v0)->capture_default_str();
  os->add_option("--out", oo->out, "Output CSV")->required();
  os->callback([oo] {
    const hmti::Trajectory tr =
        hmti::generate_parametric_oscillator(oo->omega, oo->beta, oo->t_final, oo->dt, oo->u0, oo->v0);
    hmti::write_trajectory_csv(tr, oo->out);
    emit({{"written", oo->out}, {"samples", tr.size()}, {"dt", oo->dt}});
  });
}

// ---- simulate / forecast ---------------------------------------------------

struct RolloutOpts {
  ModelSource source;
  MeshOptions mesh;
  std::size_t n_domains = 10;
  std::vector<double> u0, v0, z;
  double t0 = 0.0;
  std::string out, interfaces;

  void add_options(CLI::App* app, bool checkpoint_only) {
    if (checkpoint_only) {
      app->add_option("--checkpoint", source.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    } else {
      source.add_options(app);
    }
    mesh.add_options(app);
    app->add_option("--n", n_domains, "Number of domains")->capture_default_str();
    app->add_option("--u0", u0, "Initial state (comma separated)")->delimiter(',')->required();
    app->add_option("--v0", v0, "Initial rate (comma separated)")->delimiter(',')->required();
    app->add_option("--z", z, "Conditioning vector (comma separated)")->delimiter(',');
    app->add_option("--t0", t0, "Start time")->capture_default_str();
    app->add_option("--out", out, "CSV of cell values (t at cell midpoints)");
    app->add_option("--interfaces", interfaces, "CSV of interface values (t, lambda, J)");
  }

  void run() const {
    std::optional<hmti::Checkpoint> ckpt;
    const auto model = source.load(&ckpt);
    require_dim(u0, model->state_dim(), "--u0");
    require_dim(v0, model->state_dim(), "--v0");
    require_dim(z, model->conditioning_dim(), "--z");
    const hmti::LinearBlocks blocks = mesh.blocks(ckpt);
    const hmti::ForecastResult f = hmti::forecast(*model, blocks, to_vector(u0), to_vector(v0),
                                                  hmti::ConditioningVector(to_vector(z)), n_domains, t0);
    write_forecast(f, out, interfaces);
    json summary = forecast_summary(f);
    summary["m_cells"] = blocks.m_cells;
    summary["h"] = blocks.h;
    emit(summary);
  }
};

void add_simulate(CLI::App& app) {
  auto opts = std::make_shared<RolloutOpts>();
  auto* sim = app.add_subcommand("simulate", "Roll out a model from an initial condition");
  opts->add_options(sim, false);
  sim->callback([opts] { opts->run(); });
}

void add_forecast(CLI::App& app) {
  auto opts = std::make_shared<RolloutOpts>();
  auto* fc = app.add_subcommand("forecast", "Roll out a trained checkpoint");
  opts->add_options(fc, true);
  fc->callback([opts] { opts->run(); });
}

// ---- train -----------------------------------------------------------------

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

/// "data" is a CSV path or a list of {"path": ..., "z": [...]}.
hmti::Dataset load_dataset(const json& spec, const fs::path& base) {
  hmti::Dataset data;
  if (spec.is_string()) {
    data.add(hmti::read_trajectory_csv(resolve(base, spec.get<std::string>()).string()));
    return data;
  }
  if (!spec.is_array() || spec.empty()) throw hmti::ConfigError("train config: 'data' must be a path or a list");
  for (const json& item : spec) {
    if (!item.is_object() || !item.contains("path")) throw hmti::ConfigError("train config: data entry needs 'path'");
    Eigen::VectorXd z;
    if (item.contains("z")) z = hmti::vector_from_json(item.at("z"));
    data.add(hmti::read_trajectory_csv(resolve(base, item.at("path").get<std::string>()).string()),
             hmti::ConditioningVector(z));
  }
  return data;
}

void add_train(CLI::App& app) {
  struct Opts {
    std::string config, data, metrics, checkpoint, resume;
    std::optional<std::size_t> steps, threads;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
  };
  auto o = std::make_shared<Opts>();
  auto* tr = app.add_subcommand("train", "Fit a model to trajectory windows");
  tr->add_option("--config", o->config, "Training config (flat JSON object)")->required();
  tr->add_option("--data", o->data, "Override: single trajectory CSV");
  tr->add_option("--metrics", o->metrics, "Override: metrics JSON-lines output");
  tr->add_option("--checkpoint", o->checkpoint, "Override: checkpoint output");
  tr->add_option("--resume", o->resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--steps", o->steps, "Override: optimizer steps");
  tr->add_option("--threads", o->threads, "Override: worker threads (0 = auto)");
  tr->add_option("--seed", o->seed, "Override: seed");
  tr->add_flag("--quiet", o->quiet, "No per-step progress on stderr");
  tr->callback([o] {
    const json raw = hmti::read_json_file(o->config);
    const fs::path base = fs::path(o->config).parent_path();
    hmti::TrainConfig cfg = hmti::TrainConfig::from_json(raw);
    if (o->steps) cfg.steps = *o->steps;
    if (o->threads) cfg.threads = *o->threads;
    if (o->seed) cfg.seed = *o->seed;
    cfg.validate();

    hmti::Dataset data;
    if (!o->data.empty()) {
      data.add(hmti::read_trajectory_csv(o->data));
    } else if (raw.contains("data")) {
      data = load_dataset(raw.at("data"), base);
    } else {
      throw hmti::ConfigError("no training data: set 'data' in the config or pass --data");
    }

    hmti::TrainOutputs outs;
    outs.metrics_path = !o->metrics.empty() ? o->metrics
                        : raw.contains("metrics") ? resolve(base, raw.at("metrics").get<std::string>()).string()
                                                  : std::string();
    outs.checkpoint_path = !o->checkpoint.empty() ? o->checkpoint
                           : raw.contains("checkpoint")
                               ? resolve(base, raw.at("checkpoint").get<std::string>()).string()
                               : std::string();

    const bool quiet = o->quiet;
    const std::size_t every = std::max<std::size_t>(1, cfg.steps / 20);
    auto on_step = [quiet, every](const hmti::StepRecord& r) {
      if (!quiet && (r.step % every == 0)) std::cerr << r.to_json().dump() << "\n";
    };
    const hmti::TrainResult res = o->resume.empty()
                                      ? hmti::train(cfg, data, outs, on_step)
                                      : hmti::train(cfg, data, hmti::load_checkpoint(o->resume), outs, on_step);
    emit({{"steps", res.history.size()},
          {"initial_probe_loss", res.initial_probe_loss},
          {"final_probe_loss", res.final_probe_loss},
          {"probe_reduction", res.final_probe_loss > 0.0 ? res.initial_probe_loss / res.final_probe_loss : 0.0},
          {"skipped_windows", res.total_skipped},
          {"checkpoint", outs.checkpoint_path},
          {"metrics", outs.metrics_path}});
  });
}

// ---- diagnose --------------------------------------------------------------

void add_diagnose(CLI::App& app, int& exit_code) {
  auto* dg = app.add_subcommand("diagnose", "Structural checks of the scheme");
  dg->require_subcommand(1);

  auto sbp = std::make_shared<hmti::SbpSuiteSettings>();
  auto* s = dg->add_subcommand("sbp", "Summation-by-parts residual on random solved rollouts");
  s->add_option("--cases", sbp->cases)->capture_default_str();
  s->add_option("--max-domains", sbp->max_domains)->capture_default_str();
  s->add_option("--max-cells", sbp->max_cells)->capture_default_str();
  s->add_option("--tolerance", sbp->tolerance)->capture_default_str();
  s->add_option("--seed", sbp->seed)->capture_default_str();
  s->callback([sbp, &exit_code] {
    const auto cases = hmti::sbp_suite(*sbp);
    const json j = hmti::to_json(cases);
    emit(j);
    if (!j.at("pass").get<bool>()) exit_code = kExitCheckFailed;
  });

  auto en = std::make_shared<RolloutOpts>();
  auto* e = dg->add_subcommand("energy", "Discrete energy balance of a rollout");
  en->source.add_options(e);
  en->mesh.add_options(e);
  e->add_option("--n", en->n_domains)->capture_default_str();
  e->add_option("--u0", en->u0)->delimiter(',')->required();
  e->add_option("--v0", en->v0)->delimiter(',')->required();
  auto series = std::make_shared<bool>(false);
  e->add_flag("--series", *series, "Include per-domain series");
  e->callback([en, series] {
    std::optional<hmti::Checkpoint> ckpt;
    const auto model = en->source.load(&ckpt);
    hmti::Potential pot = hmti::Potential::zero();
    if (const auto* h = dynamic_cast<const hmti::HamiltonianModel*>(model.get())) {
      pot = h->potential();
    } else if (const auto* d = dynamic_cast<const hmti::DissipativeModel*>(model.get())) {
      pot = d->potential();
    } else if (model->kind() != "zero") {
      throw hmti::ConfigError("energy diagnostics need a zero, hamiltonian or dissipative model");
    }
    require_dim(en->u0, model->state_dim(), "--u0");
    require_dim(en->v0, model->state_dim(), "--v0");
    const hmti::LinearBlocks blocks = en->mesh.blocks(ckpt);
    const hmti::Rollout r =
        hmti::rollout(hmti::InterfaceState::FromInitialCondition(to_vector(en->u0), to_vector(en->v0)),
                      en->n_domains, *model, {}, blocks);
    json j = hmti::energy_report(r, pot, blocks.h).to_json(*series);
    j["model"] = model->config_json();
    emit(j);
  });

  struct JinvOpts {
    std::size_t m = 4;
    double h = 0.1;
    std::string form = "printed";
    double tolerance = 1e-12;
  };
  auto ji = std::make_shared<JinvOpts>();
  auto* jv = dg->add_subcommand("jinverse", "Closed-form inverse of the constant block against J");
  jv->add_option("--m", ji->m)->capture_default_str();
  jv->add_option("--h", ji->h)->capture_default_str();
  jv->add_option("--form", ji->form, "printed or corrected")
      ->check(CLI::IsMember({"printed", "corrected"}))
      ->capture_default_str();
  jv->add_option("--tolerance", ji->tolerance)->capture_default_str();
  jv->callback([ji, &exit_code] {
    const double printed = hmti::check_j_inverse(ji->m, ji->h, hmti::InverseForm::Printed);
    const double corrected = hmti::check_j_inverse(ji->m, ji->h, hmti::InverseForm::Corrected);
    const double selected = ji->form == "printed" ? printed : corrected;
    auto mat = [](const Eigen::Matrix2d& a) { return json{{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}}; };
    const bool pass = selected < ji->tolerance;
    emit({{"m_cells", ji->m},
          {"h", ji->h},
          {"form", ji->form},
          {"max_residual", selected},
          {"pass", pass},
          {"residual_printed", printed},
          {"residual_corrected", corrected},
          {"pt_jinv_q_printed", mat(hmti::explicit_pt_jinv_q(ji->m, ji->h, hmti::InverseForm::Printed))},
          {"pt_jinv_q_corrected", mat(hmti::explicit_pt_jinv_q(ji->m, ji->h, hmti::InverseForm::Corrected))}});
    if (!pass) exit_code = kExitCheckFailed;
  });

  struct GradOpts {
    ModelSource source;
    MeshOptions mesh;
    std::vector<std::size_t> n_list{10, 50, 100, 500, 1000};
    std::vector<double> u0, v0, z;
    bool euler = false;
  };
  auto go = std::make_shared<GradOpts>();
  auto* g = dg->add_subcommand("gradients", "Norm of d y_N / d theta against the number of domains");
  go->source.add_options(g);
  go->mesh.add_options(g);
  g->add_option("--n-list", go->n_list, "Domain counts (comma separated)")->delimiter(',');
  g->add_option("--u0", go->u0)->delimiter(',')->required();
  g->add_option("--v0", go->v0)->delimiter(',')->required();
  g->add_option("--z", go->z)->delimiter(',');
  g->add_flag("--euler", go->euler, "Also report the explicit-Euler baseline with step Delta t");
  g->callback([go] {
    std::optional<hmti::Checkpoint> ckpt;
    const auto model = go->source.load(&ckpt);
    require_dim(go->u0, model->state_dim(), "--u0");
    require_dim(go->v0, model->state_dim(), "--v0");
    require_dim(go->z, model->conditioning_dim(), "--z");
    const hmti::LinearBlocks blocks = go->mesh.blocks(ckpt);
    const hmti::ConditioningVector z(to_vector(go->z));
    const auto pts = hmti::gradient_norm_sweep(
        *model, z, blocks, hmti::InterfaceState::FromInitialCondition(to_vector(go->u0), to_vector(go->v0)),
        go->n_list);
    auto to_rows = [](const std::vector<hmti::GradientNormPoint>& p) {
      json rows = json::array();
      for (const auto& q : p) rows.push_back({{"n_domains", q.n_domains}, {"norm", q.norm}});
      return rows;
    };
    json j = {{"delta_t", static_cast<double>(blocks.m_cells) * blocks.h}, {"mortar", to_rows(pts)}};
    if (go->euler) {
      try {
        j["euler"] = to_rows(hmti::euler_gradient_norm_sweep(*model, z, to_vector(go->u0), to_vector(go->v0),
                                                             static_cast<double>(blocks.m_cells) * blocks.h,
                                                             go->n_list));
      } catch (const hmti::NonFiniteError& e) {
        j["euler"] = {{"diverged", e.what()}};
      }
    }
    emit(j);
  });
}

// ---- stats -----------------------------------------------------------------

void add_stats(CLI::App& app, int& exit_code) {
  auto* st = app.add_subcommand("stats", "Trajectory statistics");
  st->require_subcommand(1);
  struct Opts {
    std::string data;
    hmti::SwitchingSettings settings;
    bool intervals = false;
    bool require_pass = false;
  };
  auto o = std::make_shared<Opts>();
  auto* sw = st->add_subcommand("switching", "Lobe-switching intervals and a one-sided KS test against an exponential");
  sw->add_option("--data", o->data, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  sw->add_option("--component", o->settings.component)->capture_default_str();
  sw->add_option("--min-interval", o->settings.min_interval, "Discard intervals shorter than this")
      ->capture_default_str();
  sw->add_option("--bins", o->settings.n_bins)->capture_default_str();
  sw->add_option("--significance", o->settings.significance)->capture_default_str();
  sw->add_option("--min-switches", o->settings.min_switches)->capture_default_str();
  sw->add_flag("--intervals", o->intervals, "Include the sorted interval list");
  sw->add_flag("--require-pass", o->require_pass, "Exit nonzero when the KS test rejects");
  sw->callback([o, &exit_code] {
    const auto s = hmti::switching_statistics(hmti::read_trajectory_csv(o->data), o->settings);
    emit(s.to_json(o->intervals));
    if (o->require_pass && !s.ks_pass) exit_code = kExitCheckFailed;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmti: mixed finite-element time integration with learned nonlinearities"};
  app.set_help_flag("--help", "Print help (no -h: --h is the cell width)");
  app.require_subcommand(1);
  app.set_version_flag("--version", "hmti 0.1.0");
  int exit_code = 0;
  add_datagen(app);
  add_simulate(app);
  add_train(app);
  add_forecast(app);
  add_diagnose(app, exit_code);
  add_stats(app, exit_code);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  } catch (const hmti::Error& e) {
    print_error(e.kind(), e.what());
    return kExitFailure;
  } catch (const nlohmann::json::exception& e) {
    print_error("config", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    print_error("error", e.what());
    return kExitFailure;
  }
  return exit_code;
}
