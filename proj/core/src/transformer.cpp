#include "hmti/transformer.hpp"

#include <cmath>
#include <random>

#include "hmti/errors.hpp"

namespace hmti {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

struct Slot {
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

struct DytSlots {
  Slot alpha, gamma, beta;
};

struct BlockSlots {
  DytSlots attn_norm;
  Slot wq, bq, wk, bk, wv, bv, wo, bo;
  DytSlots mlp_norm;
  Slot w1, b1, w2, b2;
};

Eigen::Map<const MatrixXd> view(const VectorXd& theta, const Slot& s) {
  return Eigen::Map<const MatrixXd>(theta.data() + s.offset, s.rows, s.cols);
}
Eigen::Map<const RowVectorXd> row(const VectorXd& theta, const Slot& s) {
  return Eigen::Map<const RowVectorXd>(theta.data() + s.offset, s.size());
}
Eigen::Map<MatrixXd> view(VectorXd& theta, const Slot& s) {
  return Eigen::Map<MatrixXd>(theta.data() + s.offset, s.rows, s.cols);
}
Eigen::Map<RowVectorXd> row(VectorXd& theta, const Slot& s) {
  return Eigen::Map<RowVectorXd>(theta.data() + s.offset, s.size());
}

struct DytCache {
  MatrixXd x;  // input
  MatrixXd t;  // tanh(alpha * x)
  MatrixXd y;  // output
};

void dyt_forward(const VectorXd& theta, const DytSlots& s, const MatrixXd& x, DytCache& c) {
  const double alpha = theta(s.alpha.offset);
  c.x = x;
  c.t = (alpha * x.array()).tanh().matrix();
  c.y = (c.t.array().rowwise() * row(theta, s.gamma).array()).matrix();
  c.y.rowwise() += row(theta, s.beta);
}

/// Returns dL/dx and, when `grad` is set, accumulates dL/d(alpha, gamma, beta).
MatrixXd dyt_backward(const VectorXd& theta, const DytSlots& s, const DytCache& c, const MatrixXd& g_y,
                      VectorXd* grad) {
  const double alpha = theta(s.alpha.offset);
  const MatrixXd g_pre =
      ((g_y.array().rowwise() * row(theta, s.gamma).array()) * (1.0 - c.t.array().square())).matrix();
  if (grad) {
    (*grad)(s.alpha.offset) += (g_pre.array() * c.x.array()).sum();
    row(*grad, s.gamma) += (g_y.array() * c.t.array()).colwise().sum().matrix();
    row(*grad, s.beta) += g_y.colwise().sum();
  }
  return alpha * g_pre;
}

}  // namespace

struct LocalTransformer::Layout {
  Slot w_u, b_u, w_l, b_l, w_r, b_r, w_z, b_z;
  std::vector<BlockSlots> blocks;
  DytSlots out_norm;
  Slot w_out, b_out;
  Index size = 0;
  bool has_z = false;

  explicit Layout(const LocalTransformerConfig& cfg) {
    const Index d = cfg.state_dim, p = cfg.conditioning_dim, dm = cfg.model_dim, hid = cfg.mlp_hidden;
    auto take = [this](Index r, Index c) {
      Slot s{size, r, c};
      size += r * c;
      return s;
    };
    auto take_dyt = [&]() { return DytSlots{take(1, 1), take(1, dm), take(1, dm)}; };
    w_u = take(d + p, dm);
    b_u = take(1, dm);
    w_l = take(d + p, dm);
    b_l = take(1, dm);
    w_r = take(d + p, dm);
    b_r = take(1, dm);
    has_z = p > 0;
    if (has_z) {
      w_z = take(p, dm);
      b_z = take(1, dm);
    }
    for (Index b = 0; b < cfg.n_blocks; ++b) {
      BlockSlots bs;
      bs.attn_norm = take_dyt();
      bs.wq = take(dm, dm);
      bs.bq = take(1, dm);
      bs.wk = take(dm, dm);
      bs.bk = take(1, dm);
      bs.wv = take(dm, dm);
      bs.bv = take(1, dm);
      bs.wo = take(dm, dm);
      bs.bo = take(1, dm);
      bs.mlp_norm = take_dyt();
      bs.w1 = take(dm, hid);
      bs.b1 = take(1, hid);
      bs.w2 = take(hid, dm);
      bs.b2 = take(1, dm);
      blocks.push_back(bs);
    }
    out_norm = take_dyt();
    w_out = take(dm, d);
    b_out = take(1, d);
  }
};

struct LocalTransformer::Cache {
  struct Block {
    DytCache norm_q;
    std::vector<DytCache> norm_tok;
    MatrixXd q_proj;
    std::vector<MatrixXd> k, v;
    std::vector<MatrixXd> probs;  // one M x T matrix per head
    MatrixXd attn;                // concatenated head outputs, M x D
    DytCache norm_mlp;
    MatrixXd hidden;              // tanh activations
  };
  MatrixXd a_u, a_l, a_r, a_z;
  std::vector<MatrixXd> tokens;
  std::vector<Block> blocks;
  DytCache norm_out;
};

VectorXd dyt(const VectorXd& x, double alpha, const VectorXd& gamma, const VectorXd& beta) {
  if (gamma.size() != x.size() || beta.size() != x.size()) throw ShapeError("dyt: shape mismatch");
  return (gamma.array() * (alpha * x.array()).tanh() + beta.array()).matrix();
}

void LocalTransformerConfig::finalize() {
  if (model_dim <= 0 || n_blocks <= 0 || n_heads <= 0 || state_dim <= 0 || mlp_hidden <= 0 ||
      conditioning_dim < 0) {
    throw ConfigError("LocalTransformerConfig: sizes must be positive");
  }
  if (model_dim % n_heads != 0) throw ConfigError("LocalTransformerConfig: model_dim must be divisible by n_heads");
  auto fill = [](VectorXd& v, Index n, double value, const char* name) {
    if (v.size() == 0) v = VectorXd::Constant(n, value);
    if (v.size() != n) throw ConfigError(std::string("LocalTransformerConfig: ") + name + " has wrong length");
    if (!v.allFinite()) throw ConfigError(std::string("LocalTransformerConfig: ") + name + " is not finite");
  };
  fill(u_shift, state_dim, 0.0, "u_shift");
  fill(u_scale, state_dim, 1.0, "u_scale");
  fill(j_scale, state_dim, 1.0, "j_scale");
  fill(out_scale, state_dim, 1.0, "out_scale");
  fill(z_shift, conditioning_dim, 0.0, "z_shift");
  fill(z_scale, conditioning_dim, 1.0, "z_scale");
  if ((u_scale.array() <= 0).any() || (j_scale.array() <= 0).any() || (out_scale.array() <= 0).any() ||
      (z_scale.array() <= 0).any()) {
    throw ConfigError("LocalTransformerConfig: scales must be positive");
  }
}

namespace {

nlohmann::json to_array(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd from_array(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

nlohmann::json LocalTransformerConfig::to_json() const {
  return {{"kind", "local_transformer"}, {"model_dim", model_dim},   {"n_blocks", n_blocks},
          {"n_heads", n_heads},          {"state_dim", state_dim},   {"conditioning_dim", conditioning_dim},
          {"mlp_hidden", mlp_hidden},    {"init_seed", init_seed},   {"u_shift", to_array(u_shift)},
          {"u_scale", to_array(u_scale)}, {"j_scale", to_array(j_scale)}, {"out_scale", to_array(out_scale)},
          {"z_shift", to_array(z_shift)}, {"z_scale", to_array(z_scale)}};
}

LocalTransformerConfig LocalTransformerConfig::from_json(const nlohmann::json& j) {
  LocalTransformerConfig c;
  c.model_dim = j.value("model_dim", c.model_dim);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.state_dim = j.value("state_dim", c.state_dim);
  c.conditioning_dim = j.value("conditioning_dim", c.conditioning_dim);
  c.mlp_hidden = j.value("mlp_hidden", 2 * c.model_dim);
  c.init_seed = j.value("init_seed", c.init_seed);
  for (auto [key, dst] : {std::pair{"u_shift", &c.u_shift}, {"u_scale", &c.u_scale}, {"j_scale", &c.j_scale},
                          {"out_scale", &c.out_scale}, {"z_shift", &c.z_shift}, {"z_scale", &c.z_scale}}) {
    if (j.contains(key)) *dst = from_array(j.at(key));
  }
  c.finalize();
  return c;
}

LocalTransformer::LocalTransformer(LocalTransformerConfig config) : config_(std::move(config)) {
  config_.finalize();
  layout_ = std::make_shared<const Layout>(config_);
  theta_ = VectorXd::Zero(layout_->size);

  std::mt19937_64 rng(config_.init_seed);
  auto init_uniform = [&](const Slot& s) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < s.size(); ++i) theta_(s.offset + i) = dist(rng);
  };
  auto init_dyt = [&](const DytSlots& s) {
    theta_(s.alpha.offset) = 0.5;
    row(theta_, s.gamma).setOnes();
  };
  const Layout& l = *layout_;
  init_uniform(l.w_u);
  init_uniform(l.w_l);
  init_uniform(l.w_r);
  if (l.has_z) init_uniform(l.w_z);
  for (const BlockSlots& b : l.blocks) {
    init_dyt(b.attn_norm);
    init_uniform(b.wq);
    init_uniform(b.wk);
    init_uniform(b.wv);
    init_uniform(b.wo);
    init_dyt(b.mlp_norm);
    init_uniform(b.w1);
    init_uniform(b.w2);
  }
  init_dyt(l.out_norm);
  // w_out, b_out stay zero: the untrained model is N == 0.
}

void LocalTransformer::set_params(const VectorXd& theta) {
  if (theta.size() != layout_->size) {
    throw ShapeError("LocalTransformer: expected " + std::to_string(layout_->size) + " parameters, got " +
                     std::to_string(theta.size()));
  }
  if (!theta.allFinite()) throw NonFiniteError("LocalTransformer: non-finite parameters");
  theta_ = theta;
}

void LocalTransformer::forward(const MatrixXd& u, const MatrixXd& jl, const MatrixXd& jr, const VectorXd& z,
                               Cache& c) const {
  const Layout& l = *layout_;
  const Index m = u.rows(), d = config_.state_dim, p = config_.conditioning_dim, dm = config_.model_dim;
  const Index heads = config_.n_heads, dh = dm / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  RowVectorXd zn(p);
  if (p > 0) zn = ((z - config_.z_shift).array() / config_.z_scale.array()).matrix().transpose();

  auto make_input = [&](const MatrixXd& x, const VectorXd& shift, const VectorXd& scale) {
    MatrixXd a(m, d + p);
    a.leftCols(d) = ((x.rowwise() - shift.transpose()).array().rowwise() / scale.transpose().array()).matrix();
    if (p > 0) a.rightCols(p) = zn.replicate(m, 1);
    return a;
  };
  const VectorXd zero_shift = VectorXd::Zero(d);
  c.a_u = make_input(u, config_.u_shift, config_.u_scale);
  c.a_l = make_input(jl, zero_shift, config_.j_scale);
  c.a_r = make_input(jr, zero_shift, config_.j_scale);

  c.tokens.clear();
  auto embed = [&](const MatrixXd& a, const Slot& w, const Slot& b) {
    MatrixXd e = a * view(theta_, w);
    e.rowwise() += row(theta_, b);
    return e;
  };
  c.tokens.push_back(embed(c.a_u, l.w_u, l.b_u));
  c.tokens.push_back(embed(c.a_l, l.w_l, l.b_l));
  c.tokens.push_back(embed(c.a_r, l.w_r, l.b_r));
  if (l.has_z) {
    c.a_z = zn.replicate(m, 1);
    c.tokens.push_back(embed(c.a_z, l.w_z, l.b_z));
  }
  const auto n_tok = static_cast<Index>(c.tokens.size());

  MatrixXd q = c.tokens[0];
  c.blocks.resize(l.blocks.size());
  for (std::size_t bi = 0; bi < l.blocks.size(); ++bi) {
    const BlockSlots& bs = l.blocks[bi];
    Cache::Block& bc = c.blocks[bi];

    dyt_forward(theta_, bs.attn_norm, q, bc.norm_q);
    bc.norm_tok.resize(static_cast<std::size_t>(n_tok));
    bc.k.resize(static_cast<std::size_t>(n_tok));
    bc.v.resize(static_cast<std::size_t>(n_tok));
    bc.q_proj = bc.norm_q.y * view(theta_, bs.wq);
    bc.q_proj.rowwise() += row(theta_, bs.bq);
    for (Index t = 0; t < n_tok; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      dyt_forward(theta_, bs.attn_norm, c.tokens[ts], bc.norm_tok[ts]);
      bc.k[ts] = bc.norm_tok[ts].y * view(theta_, bs.wk);
      bc.k[ts].rowwise() += row(theta_, bs.bk);
      bc.v[ts] = bc.norm_tok[ts].y * view(theta_, bs.wv);
      bc.v[ts].rowwise() += row(theta_, bs.bv);
    }
    bc.probs.assign(static_cast<std::size_t>(heads), MatrixXd(m, n_tok));
    bc.attn = MatrixXd::Zero(m, dm);
    for (Index hd = 0; hd < heads; ++hd) {
      MatrixXd& pr = bc.probs[static_cast<std::size_t>(hd)];
      for (Index t = 0; t < n_tok; ++t) {
        pr.col(t) = (bc.q_proj.middleCols(hd * dh, dh).array() *
                     bc.k[static_cast<std::size_t>(t)].middleCols(hd * dh, dh).array())
                        .rowwise()
                        .sum()
                        .matrix() *
                    inv_sqrt_dh;
      }
      const Eigen::VectorXd mx = pr.rowwise().maxCoeff();
      pr = (pr.colwise() - mx).array().exp().matrix();
      const Eigen::VectorXd den = pr.rowwise().sum();
      pr = pr.array().colwise() / den.array();
      for (Index t = 0; t < n_tok; ++t) {
        bc.attn.middleCols(hd * dh, dh) +=
            (bc.v[static_cast<std::size_t>(t)].middleCols(hd * dh, dh).array().colwise() * pr.col(t).array())
                .matrix();
      }
    }
    q += bc.attn * view(theta_, bs.wo);
    q.rowwise() += row(theta_, bs.bo);

    dyt_forward(theta_, bs.mlp_norm, q, bc.norm_mlp);
    MatrixXd pre = bc.norm_mlp.y * view(theta_, bs.w1);
    pre.rowwise() += row(theta_, bs.b1);
    bc.hidden = pre.array().tanh().matrix();
    q += bc.hidden * view(theta_, bs.w2);
    q.rowwise() += row(theta_, bs.b2);
  }
  dyt_forward(theta_, l.out_norm, q, c.norm_out);
}

void LocalTransformer::backward(const Cache& c, const MatrixXd& cot, InputGrads* inputs, VectorXd* grad) const {
  const Layout& l = *layout_;
  const Index m = cot.rows(), d = config_.state_dim, dm = config_.model_dim;
  const Index heads = config_.n_heads, dh = dm / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto n_tok = static_cast<Index>(c.tokens.size());

  const MatrixXd g_out = (cot.array().rowwise() * config_.out_scale.transpose().array()).matrix();
  if (grad) {
    view(*grad, l.w_out) += c.norm_out.y.transpose() * g_out;
    row(*grad, l.b_out) += g_out.colwise().sum();
  }
  MatrixXd g_q = dyt_backward(theta_, l.out_norm, c.norm_out, g_out * view(theta_, l.w_out).transpose(), grad);

  std::vector<MatrixXd> g_tok(static_cast<std::size_t>(n_tok), MatrixXd::Zero(m, dm));
  for (std::size_t bi = l.blocks.size(); bi-- > 0;) {
    const BlockSlots& bs = l.blocks[bi];
    const Cache::Block& bc = c.blocks[bi];

    // MLP branch.
    const MatrixXd g_hidden = g_q * view(theta_, bs.w2).transpose();
    const MatrixXd g_pre = (g_hidden.array() * (1.0 - bc.hidden.array().square())).matrix();
    if (grad) {
      view(*grad, bs.w2) += bc.hidden.transpose() * g_q;
      row(*grad, bs.b2) += g_q.colwise().sum();
      view(*grad, bs.w1) += bc.norm_mlp.y.transpose() * g_pre;
      row(*grad, bs.b1) += g_pre.colwise().sum();
    }
    g_q += dyt_backward(theta_, bs.mlp_norm, bc.norm_mlp, g_pre * view(theta_, bs.w1).transpose(), grad);

    // Attention branch.
    const MatrixXd g_attn = g_q * view(theta_, bs.wo).transpose();
    if (grad) {
      view(*grad, bs.wo) += bc.attn.transpose() * g_q;
      row(*grad, bs.bo) += g_q.colwise().sum();
    }
    MatrixXd g_qp = MatrixXd::Zero(m, dm);
    std::vector<MatrixXd> g_k(static_cast<std::size_t>(n_tok), MatrixXd::Zero(m, dm));
    std::vector<MatrixXd> g_v(static_cast<std::size_t>(n_tok), MatrixXd::Zero(m, dm));
    for (Index hd = 0; hd < heads; ++hd) {
      const MatrixXd& pr = bc.probs[static_cast<std::size_t>(hd)];
      const auto go = g_attn.middleCols(hd * dh, dh);
      MatrixXd g_p(m, n_tok);
      for (Index t = 0; t < n_tok; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        g_v[ts].middleCols(hd * dh, dh) = (go.array().colwise() * pr.col(t).array()).matrix();
        g_p.col(t) = (go.array() * bc.v[ts].middleCols(hd * dh, dh).array()).rowwise().sum().matrix();
      }
      const Eigen::VectorXd dot = (g_p.array() * pr.array()).rowwise().sum();
      const MatrixXd g_s = (pr.array() * (g_p.colwise() - dot).array()).matrix() * inv_sqrt_dh;
      for (Index t = 0; t < n_tok; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        g_qp.middleCols(hd * dh, dh) +=
            (bc.k[ts].middleCols(hd * dh, dh).array().colwise() * g_s.col(t).array()).matrix();
        g_k[ts].middleCols(hd * dh, dh) =
            (bc.q_proj.middleCols(hd * dh, dh).array().colwise() * g_s.col(t).array()).matrix();
      }
    }
    if (grad) {
      view(*grad, bs.wq) += bc.norm_q.y.transpose() * g_qp;
      row(*grad, bs.bq) += g_qp.colwise().sum();
    }
    g_q += dyt_backward(theta_, bs.attn_norm, bc.norm_q, g_qp * view(theta_, bs.wq).transpose(), grad);
    for (Index t = 0; t < n_tok; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      if (grad) {
        view(*grad, bs.wk) += bc.norm_tok[ts].y.transpose() * g_k[ts];
        row(*grad, bs.bk) += g_k[ts].colwise().sum();
        view(*grad, bs.wv) += bc.norm_tok[ts].y.transpose() * g_v[ts];
        row(*grad, bs.bv) += g_v[ts].colwise().sum();
      }
      const MatrixXd g_norm = g_k[ts] * view(theta_, bs.wk).transpose() + g_v[ts] * view(theta_, bs.wv).transpose();
      g_tok[ts] += dyt_backward(theta_, bs.attn_norm, bc.norm_tok[ts], g_norm, grad);
    }
  }
  // The query stream starts as the u token.
  g_tok[0] += g_q;

  auto embed_back = [&](const MatrixXd& a, const MatrixXd& g_e, const Slot& w, const Slot& b) {
    if (grad) {
      view(*grad, w) += a.transpose() * g_e;
      row(*grad, b) += g_e.colwise().sum();
    }
    return MatrixXd(g_e * view(theta_, w).transpose());
  };
  const MatrixXd g_au = embed_back(c.a_u, g_tok[0], l.w_u, l.b_u);
  const MatrixXd g_al = embed_back(c.a_l, g_tok[1], l.w_l, l.b_l);
  const MatrixXd g_ar = embed_back(c.a_r, g_tok[2], l.w_r, l.b_r);
  if (l.has_z) embed_back(c.a_z, g_tok[3], l.w_z, l.b_z);
  if (inputs) {
    inputs->u = (g_au.leftCols(d).array().rowwise() / config_.u_scale.transpose().array()).matrix();
    inputs->jl = (g_al.leftCols(d).array().rowwise() / config_.j_scale.transpose().array()).matrix();
    inputs->jr = (g_ar.leftCols(d).array().rowwise() / config_.j_scale.transpose().array()).matrix();
  }
}

DgP0Field LocalTransformer::evaluate(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  const Index m = u.cells();
  Cache c;
  forward(u.values, j.values.topRows(m), j.values.bottomRows(m), z.z, c);
  MatrixXd out = c.norm_out.y * view(theta_, layout_->w_out);
  out.rowwise() += row(theta_, layout_->b_out);
  out = (out.array().rowwise() * config_.out_scale.transpose().array()).matrix();
  if (!out.allFinite()) throw NonFiniteError("LocalTransformer: non-finite output");
  return DgP0Field(std::move(out));
}

ModelPartials LocalTransformer::partials(const DgP0Field& u, const P1Field& j, const ConditioningVector& z) const {
  check_inputs(u, j, z);
  const Index m = u.cells(), d = config_.state_dim;
  Cache c;
  forward(u.values, j.values.topRows(m), j.values.bottomRows(m), z.z, c);
  ModelPartials p{MatrixXd::Zero(m * d, m * d), MatrixXd::Zero(m * d, (m + 1) * d)};
  InputGrads g;
  for (Index out_c = 0; out_c < d; ++out_c) {
    // Cells are decoded independently, so one sweep with a unit cotangent on
    // component out_c of every cell yields all per-cell input gradients.
    MatrixXd cot = MatrixXd::Zero(m, d);
    cot.col(out_c).setOnes();
    backward(c, cot, &g, nullptr);
    for (Index k = 0; k < m; ++k) {
      const Index r = out_c * m + k;
      for (Index in_c = 0; in_c < d; ++in_c) {
        p.d_u(r, in_c * m + k) = g.u(k, in_c);
        p.d_j(r, in_c * (m + 1) + k) += g.jl(k, in_c);
        p.d_j(r, in_c * (m + 1) + k + 1) += g.jr(k, in_c);
      }
    }
  }
  return p;
}

VectorXd LocalTransformer::theta_vjp(const DgP0Field& u, const P1Field& j, const ConditioningVector& z,
                                     const DgP0Field& cotangent) const {
  check_inputs(u, j, z);
  if (cotangent.values.rows() != u.cells() || cotangent.values.cols() != config_.state_dim) {
    throw ShapeError("LocalTransformer::theta_vjp: cotangent shape mismatch");
  }
  const Index m = u.cells();
  VectorXd grad = VectorXd::Zero(theta_.size());
  if (cotangent.values.isZero(0.0)) return grad;
  Cache c;
  forward(u.values, j.values.topRows(m), j.values.bottomRows(m), z.z, c);
  backward(c, cotangent.values, nullptr, &grad);
  return grad;
}

VectorXd LocalTransformer::evaluate_point(const VectorXd& u, const VectorXd& jv, const ConditioningVector& z,
                                          MatrixXd* d_u, MatrixXd* d_j) const {
  const Index d = config_.state_dim;
  if (u.size() != d || jv.size() != d || z.size() != config_.conditioning_dim) {
    throw ShapeError("LocalTransformer::evaluate_point: shape mismatch");
  }
  const MatrixXd um = u.transpose();
  const MatrixXd jm = jv.transpose();
  Cache c;
  forward(um, jm, jm, z.z, c);
  RowVectorXd out = c.norm_out.y * view(theta_, layout_->w_out) + row(theta_, layout_->b_out);
  out = (out.array() * config_.out_scale.transpose().array()).matrix();
  if (d_u || d_j) {
    if (d_u) d_u->resize(d, d);
    if (d_j) d_j->resize(d, d);
    InputGrads g;
    for (Index oc = 0; oc < d; ++oc) {
      MatrixXd cot = MatrixXd::Zero(1, d);
      cot(0, oc) = 1.0;
      backward(c, cot, &g, nullptr);
      if (d_u) d_u->row(oc) = g.u.row(0);
      if (d_j) d_j->row(oc) = g.jl.row(0) + g.jr.row(0);
    }
  }
  return out.transpose();
}

}  // namespace hmti
