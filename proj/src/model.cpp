#include "bdgstn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace bdgstn {

GraphMode parse_graph_mode(const std::string& s) {
  if (s == "fused") return GraphMode::fused;
  if (s == "backbone-only") return GraphMode::backbone_only;
  if (s == "temporal-only") return GraphMode::temporal_only;
  if (s == "geography") return GraphMode::geography;
  if (s == "gravity") return GraphMode::gravity;
  if (s == "dtw") return GraphMode::dtw;
  if (s == "pcc") return GraphMode::pcc;
  throw ConfigError("unknown graph_mode '" + s + "'");
}

std::string graph_mode_name(GraphMode m) {
  switch (m) {
    case GraphMode::fused: return "fused";
    case GraphMode::backbone_only: return "backbone-only";
    case GraphMode::temporal_only: return "temporal-only";
    case GraphMode::geography: return "geography";
    case GraphMode::gravity: return "gravity";
    case GraphMode::dtw: return "dtw";
    case GraphMode::pcc: return "pcc";
  }
  return "?";
}

bool graph_mode_is_static(GraphMode m) {
  return m == GraphMode::geography || m == GraphMode::gravity || m == GraphMode::dtw ||
         m == GraphMode::pcc;
}

Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "temporal-only") return Ablation::temporal_only;
  if (s == "spatial-only") return Ablation::spatial_only;
  if (s == "no-loss") return Ablation::no_loss;
  if (s == "no-trend") return Ablation::no_trend;
  throw ConfigError("unknown ablation '" + s + "'");
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::temporal_only: return "temporal-only";
    case Ablation::spatial_only: return "spatial-only";
    case Ablation::no_loss: return "no-loss";
    case Ablation::no_trend: return "no-trend";
  }
  return "?";
}

namespace {

Var uniform_leaf(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return make_leaf(std::move(t), true);
}

}  // namespace

BDGSTNParams BDGSTNParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.n_patches == 0) throw ConfigError("model config: n_patches unset");
  if (cfg.ma_kernel % 2 == 0 || cfg.ma_kernel >= 2 * cfg.t_in)
    throw ConfigError("model config: ma_kernel must be odd and < 2*t_in");
  std::mt19937_64 rng(seed);
  BDGSTNParams p;
  p.embed_w = uniform_leaf({kNumFeatures, cfg.d_h}, kNumFeatures, rng);
  p.embed_b = uniform_leaf({cfg.d_h}, kNumFeatures, rng);
  p.backbone_e = uniform_leaf({cfg.n_patches, cfg.d_ada}, cfg.d_ada, rng);
  p.tcn_f = uniform_leaf({cfg.tcn_kernel, cfg.d_h, cfg.d_tcn}, cfg.tcn_kernel * cfg.d_h, rng);
  p.tcn_b = uniform_leaf({cfg.d_tcn}, cfg.tcn_kernel * cfg.d_h, rng);
  p.trend_w = uniform_leaf({cfg.d_h, cfg.d_h}, cfg.d_h, rng);
  p.trend_b = uniform_leaf({cfg.d_h}, cfg.d_h, rng);
  p.rem_w = uniform_leaf({cfg.d_h, cfg.d_h}, cfg.d_h, rng);
  p.rem_b = uniform_leaf({cfg.d_h}, cfg.d_h, rng);
  p.gcn_w = uniform_leaf({cfg.d_h, cfg.d_st}, cfg.d_h, rng);
  p.gcn_b = uniform_leaf({cfg.d_st}, cfg.d_h, rng);
  const std::size_t flat = cfg.t_in * cfg.d_st;
  p.st_w = uniform_leaf({flat, cfg.horizon}, flat, rng);
  p.st_b = uniform_leaf({cfg.horizon}, flat, rng);
  p.epi_w = uniform_leaf({flat, 2}, flat, rng);
  p.epi_b = uniform_leaf({2}, flat, rng);
  return p;
}

std::vector<std::pair<std::string, Var>> BDGSTNParams::named() const {
  return {{"embed_w", embed_w}, {"embed_b", embed_b}, {"backbone_e", backbone_e},
          {"tcn_f", tcn_f},     {"tcn_b", tcn_b},     {"trend_w", trend_w},
          {"trend_b", trend_b}, {"rem_w", rem_w},     {"rem_b", rem_b},
          {"gcn_w", gcn_w},     {"gcn_b", gcn_b},     {"st_w", st_w},
          {"st_b", st_b},       {"epi_w", epi_w},     {"epi_b", epi_b}};
}

std::vector<Var> BDGSTNParams::all() const {
  std::vector<Var> out;
  for (auto& [name, v] : named()) out.push_back(v);
  return out;
}

BDGSTNParams BDGSTNParams::clone() const {
  BDGSTNParams c = *this;
  for (Var* v : {&c.embed_w, &c.embed_b, &c.backbone_e, &c.tcn_f, &c.tcn_b, &c.trend_w,
                 &c.trend_b, &c.rem_w, &c.rem_b, &c.gcn_w, &c.gcn_b, &c.st_w, &c.st_b, &c.epi_w,
                 &c.epi_b})
    *v = make_leaf((*v)->value, true);
  return c;
}

void conserve_exact(double& s, double& i, double& r, double cap) {
  auto nudge = [&] {
    for (int it = 0; it < 8; ++it) {
      const double err = cap - ((s + i) + r);
      if (err == 0.0) return true;
      if (s + err >= 0.0)
        s += err;
      else if (r + err >= 0.0)
        r += err;
      else
        i += err;
    }
    return cap - ((s + i) + r) == 0.0;
  };
  if (nudge()) return;
  // The nudge can stall when the residue is below the ulp of the compartment
  // it lands in; re-solve one compartment outright and nudge once more.
  const double rr = cap - (s + i);
  const double ss = cap - (i + r);
  if (rr >= 0.0)
    r = rr;
  else if (ss >= 0.0)
    s = ss;
  else
    i = cap - (s + r);
  nudge();
}

SIRState sir_step_with_force(const SIRState& state, const std::vector<double>& beta,
                             const std::vector<double>& gamma,
                             const std::vector<double>& infectious_eff) {
  const std::size_t n = state.s.size();
  SIRState out = state;
  for (std::size_t k = 0; k < n; ++k) {
    const double cap = state.population[k];
    double inf = beta[k] * infectious_eff[k];
    inf = inf * state.s[k];
    inf = inf / cap;
    const double rec = gamma[k] * state.i[k];
    double s2 = state.s[k] - inf;
    double i2 = state.i[k] + (inf - rec);
    double r2 = state.r[k] + rec;
    s2 = std::clamp(s2, 0.0, cap);
    i2 = std::clamp(i2, 0.0, cap);
    r2 = std::clamp(r2, 0.0, cap);
    const double tot = (s2 + i2) + r2;
    const double scale = cap / tot;
    s2 *= scale;
    i2 *= scale;
    r2 *= scale;
    conserve_exact(s2, i2, r2, cap);
    out.s[k] = s2;
    out.i[k] = i2;
    out.r[k] = r2;
  }
  return out;
}

SIRState sir_step(const SIRState& state, const std::vector<double>& beta,
                  const std::vector<double>& gamma) {
  return sir_step_with_force(state, beta, gamma, state.i);
}

Tensor sir_rollout(const SIRState& seed, const std::vector<double>& beta,
                   const std::vector<double>& gamma, std::size_t horizon) {
  if (horizon < 1) throw ContractError("sir_rollout: horizon must be >= 1");
  const std::size_t n = seed.s.size();
  Tensor out({n, horizon});
  SIRState st = seed;
  for (std::size_t l = 0; l < horizon; ++l) {
    st = sir_step(st, beta, gamma);
    for (std::size_t k = 0; k < n; ++k) out[k * horizon + l] = st.i[k];
  }
  return out;
}

Var embed(const Var& x, const Var& w, const Var& b) { return linear_lastdim(x, w, b); }

std::pair<Var, Var> series_decomp(const Var& h, std::size_t ma_kernel) {
  Var remainder = sub(h, moving_average(h, static_cast<int>(ma_kernel)));
  // One refinement so trend + remainder reproduces h bit-exactly.
  Var trend = sub(h, remainder);
  return {trend, remainder};
}

Var dlinear(const Var& h, const BDGSTNParams& params, const ModelConfig& cfg) {
  auto [trend, remainder] = series_decomp(h, cfg.ma_kernel);
  return add(linear_lastdim(trend, params.trend_w, params.trend_b),
             linear_lastdim(remainder, params.rem_w, params.rem_b));
}

Var gcn_layer(const Var& h_t, const Var& a_dyn, const Var& w, const Var& b) {
  return linear_lastdim(timewise_matmul(a_dyn, h_t), w, b);
}

std::pair<Var, Var> epi_rates(const Var& flat, const Var& w, const Var& b) {
  Var raw = linear_lastdim(flat, w, b);
  return {sigmoid(select_lastdim(raw, 0)), sigmoid(select_lastdim(raw, 1))};
}

ForecastOutput model_forward(const BDGSTNParams& params, const Tensor& inputs,
                             const Tensor& raw_last, const std::vector<double>& population,
                             const Normalizer& norm, const ModelConfig& cfg,
                             const Tensor* static_graph) {
  if (inputs.rank() != 3 || inputs.dim(2) != kNumFeatures)
    throw DimensionError("model_forward: inputs must be N x T x 3");
  const std::size_t n = inputs.dim(0), t_in = inputs.dim(1);
  if (n != cfg.n_patches || t_in != cfg.t_in)
    throw DimensionError("model_forward: window does not match model config");

  ForecastOutput out;
  Var x = make_const(inputs);
  Var h = embed(x, params.embed_w, params.embed_b);  // N x T x D_H

  Var h_t;
  switch (cfg.ablation) {
    case Ablation::spatial_only: h_t = h; break;
    case Ablation::no_trend: h_t = linear_lastdim(h, params.trend_w, params.trend_b); break;
    default: h_t = dlinear(h, params, cfg); break;
  }

  Var h_st;
  if (cfg.ablation == Ablation::temporal_only) {
    h_st = h_t;
  } else {
    Var aggregated;
    switch (cfg.graph_mode) {
      case GraphMode::fused: {
        GraphSet gs = fuse_dynamic(
            backbone_logits(params.backbone_e),
            temporal_logits(h, params.tcn_f, params.tcn_b, cfg.tcn_dilation));
        aggregated = timewise_matmul(gs.dyn, h_t);
        out.graphs = std::move(gs);
        break;
      }
      case GraphMode::backbone_only: {
        Var a = row_softmax(relu(backbone_logits(params.backbone_e)));
        aggregated = timewise_matmul(a, h_t);
        break;
      }
      case GraphMode::temporal_only: {
        Var a = row_softmax(
            relu(temporal_logits(h, params.tcn_f, params.tcn_b, cfg.tcn_dilation)));
        aggregated = timewise_matmul(a, h_t);
        break;
      }
      default: {
        if (!static_graph)
          throw ConfigError("model_forward: graph_mode " + graph_mode_name(cfg.graph_mode) +
                            " requires a static graph");
        aggregated = timewise_matmul(make_const(*static_graph), h_t);
        break;
      }
    }
    h_st = linear_lastdim(aggregated, params.gcn_w, params.gcn_b);
  }

  const std::size_t d_out = h_st->value.dim(2);
  if (t_in * d_out != params.st_w->value.dim(0))
    throw DimensionError("model_forward: head input width mismatch");
  Var flat = reshape(h_st, {n, t_in * d_out});
  out.y_st = linear_lastdim(flat, params.st_w, params.st_b);  // N x L

  if (cfg.ablation != Ablation::no_loss) {
    auto [beta, gamma] = epi_rates(flat, params.epi_w, params.epi_b);
    out.beta = beta;
    out.gamma = gamma;

    // Differentiable SIR rollout in raw count space, seeded from the
    // last observed day.
    std::vector<double> s0(n), i0(n), r0(n);
    for (std::size_t k = 0; k < n; ++k) {
      s0[k] = raw_last[k * kNumFeatures + kSusceptible];
      i0[k] = raw_last[k * kNumFeatures + kInfected];
      r0[k] = raw_last[k * kNumFeatures + kRecovered];
    }
    Tensor pop_t({n}, population);
    Var pop = make_const(pop_t);
    Tensor zero_t({1}, {0.0});
    Var s = make_const(Tensor({n}, std::move(s0)));
    Var i = make_const(Tensor({n}, std::move(i0)));
    Var r = make_const(Tensor({n}, std::move(r0)));
    std::vector<Var> steps;
    for (std::size_t l = 0; l < cfg.horizon; ++l) {
      Var new_inf = div(mul(mul(beta, i), s), pop);
      Var new_rec = mul(gamma, i);
      s = sub(s, new_inf);
      i = add(i, sub(new_inf, new_rec));
      r = add(r, new_rec);
      s = clamp_box(s, zero_t, pop_t);
      i = clamp_box(i, zero_t, pop_t);
      r = clamp_box(r, zero_t, pop_t);
      Var scale_f = div(pop, add(add(s, i), r));
      s = mul(s, scale_f);
      i = mul(i, scale_f);
      r = mul(r, scale_f);
      steps.push_back(i);
    }
    Var y_phy_raw = stack_lastdim(steps);  // N x L
    out.y_phy_raw = y_phy_raw->value;

    // Normalize the infected channel so both loss terms share units.
    Tensor min_i({n, cfg.horizon}), range_i({n, cfg.horizon});
    for (std::size_t k = 0; k < n; ++k) {
      const double mn = norm.min()[k * kNumFeatures + kInfected];
      const double mx = norm.max()[k * kNumFeatures + kInfected];
      for (std::size_t l = 0; l < cfg.horizon; ++l) {
        min_i[k * cfg.horizon + l] = mn;
        range_i[k * cfg.horizon + l] = mx - mn + Normalizer::kEps;
      }
    }
    out.y_phy = div(sub(y_phy_raw, make_const(std::move(min_i))), make_const(std::move(range_i)));
  }
  return out;
}

}  // namespace bdgstn
