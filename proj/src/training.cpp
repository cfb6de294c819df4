#include "bdgstn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace bdgstn {

AdamState AdamState::init(const std::vector<Var>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Var& p : params) {
    s.m.push_back(Tensor::zeros_like(p->value));
    s.v.push_back(Tensor::zeros_like(p->value));
  }
  return s;
}

void adam_step(const std::vector<Var>& params, AdamState& state, double lr) {
  if (params.size() != state.m.size())
    throw ContractError("adam_step: state does not match parameter list");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Node& node = *params[p];
    const Tensor& g = node.grad_buf();
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      node.value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

Var joint_loss(const Var& y_st, const Var& y_phy, const Var& y) {
  if (!y_st || !y) throw ContractError("joint_loss: null forecast or target");
  if (!y_st->value.same_shape(y->value))
    throw ContractError("joint_loss: y_st shape " + shape_str(y_st->value.shape()) +
                        " vs target " + shape_str(y->value.shape()));
  Var loss = mean(abs(sub(y_st, y)));
  if (y_phy) {
    if (!y_phy->value.same_shape(y->value))
      throw ContractError("joint_loss: y_phy shape " + shape_str(y_phy->value.shape()) +
                          " vs target " + shape_str(y->value.shape()));
    loss = add(loss, mean(abs(sub(y_phy, y))));
  }
  return loss;
}

Tensor build_static_graph(const EpidemicDataset& ds, DayRange train, GraphMode mode) {
  switch (mode) {
    case GraphMode::fused:
    case GraphMode::backbone_only:
    case GraphMode::temporal_only:
      return Tensor();
    case GraphMode::geography:
      if (!ds.geo_adjacency)
        throw ConfigError("geography graph requested but the dataset has no adjacency");
      return geography_graph(*ds.geo_adjacency);
    case GraphMode::gravity:
      if (!ds.coordinates)
        throw ConfigError("gravity graph requested but the dataset has no coordinates");
      return gravity_graph(ds.population, *ds.coordinates);
    case GraphMode::dtw:
    case GraphMode::pcc: {
      const std::size_t n = ds.n_patches(), t = train.length();
      Tensor inf({n, t});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < t; ++d)
          inf[i * t + d] = ds.at(i, train.begin + d, kInfected);
      return mode == GraphMode::dtw ? dtw_graph(inf) : pcc_graph(inf);
    }
  }
  throw ConfigError("build_static_graph: unknown graph mode");
}

static ModelConfig model_config_from(const EpidemicDataset& ds, const TrainConfig& cfg) {
  ModelConfig mc;
  mc.n_patches = ds.n_patches();
  mc.t_in = cfg.t_in;
  mc.horizon = cfg.horizon;
  mc.graph_mode = cfg.graph_mode;
  mc.ablation = cfg.ablation;
  return mc;
}

Tensor predict_windows(const BDGSTNParams& params, const WindowBatch& windows,
                       const std::vector<double>& population, const Normalizer& norm,
                       const ModelConfig& cfg, const Tensor* static_graph) {
  // The point forecast never depends on the physics branch; skip it when
  // no other ablation is in play.
  ModelConfig fwd_cfg = cfg;
  if (fwd_cfg.ablation == Ablation::none) fwd_cfg.ablation = Ablation::no_loss;
  const std::size_t b = windows.n_windows, n = windows.n_patches, l = windows.horizon;
  Tensor out({b, n, l});
  for (std::size_t w = 0; w < b; ++w) {
    ForecastOutput fo =
        model_forward(params, windows.input_window(w), windows.raw_last_window(w), population,
                      norm, fwd_cfg, static_graph);
    const Tensor& y = fo.y_st->value;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t h = 0; h < l; ++h)
        out[(w * n + i) * l + h] = norm.denormalize(i, kInfected, y[i * l + h]);
  }
  return out;
}

MetricsReport evaluate_split(const BDGSTNParams& params, const WindowBatch& windows,
                             const std::vector<double>& population, const Normalizer& norm,
                             const ModelConfig& cfg, const Tensor* static_graph) {
  const Tensor pred = predict_windows(params, windows, population, norm, cfg, static_graph);
  return compute_metrics(pred.values(), windows.raw_targets.values());
}

TrainResult train(const EpidemicDataset& ds, const TrainConfig& cfg) {
  if (cfg.epochs == 0) throw ConfigError("train: epochs must be positive");
  if (cfg.learning_rate <= 0.0) throw ConfigError("train: learning rate must be positive");

  TrainResult res;
  res.splits = chrono_split(ds, cfg.split_ratios, cfg.t_in, cfg.horizon);
  res.normalizer = fit_normalizer(ds, res.splits.train);
  res.model_config = model_config_from(ds, cfg);
  res.static_graph = build_static_graph(ds, res.splits.train, cfg.graph_mode);
  const Tensor* sg = res.static_graph.empty() ? nullptr : &res.static_graph;

  const WindowBatch train_w =
      make_windows(ds, res.normalizer, res.splits.train, cfg.t_in, cfg.horizon);
  const WindowBatch val_w =
      make_windows(ds, res.normalizer, res.splits.val, cfg.t_in, cfg.horizon);

  BDGSTNParams params = BDGSTNParams::init(res.model_config, cfg.seed);
  std::vector<Var> leaves = params.all();
  AdamState adam = AdamState::init(leaves);
  const std::vector<double>& pop = ds.population;

  double best_mae = std::numeric_limits<double>::infinity();
  BDGSTNParams best = params.clone();
  std::size_t best_epoch = 0;

  std::vector<std::size_t> order(train_w.n_windows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(cfg.seed + 1 + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    if (cfg.batch_mode == BatchMode::full_batch) zero_grad(leaves);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t w = order[k];
      ForecastOutput fo = model_forward(params, train_w.input_window(w),
                                        train_w.raw_last_window(w), pop, res.normalizer,
                                        res.model_config, sg);
      Var target = make_const(train_w.target_window(w));
      Var loss = joint_loss(fo.y_st, fo.y_phy, target);
      const double lv = loss->value[0];
      if (!std::isfinite(lv)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << ", window " << w;
        throw ContractError(os.str());
      }
      epoch_loss += lv;
      if (cfg.batch_mode == BatchMode::per_window) {
        zero_grad(leaves);
        backward(loss);
        adam_step(leaves, adam, cfg.learning_rate);
      } else {
        backward(scale(loss, 1.0 / static_cast<double>(order.size())));
      }
    }
    if (cfg.batch_mode == BatchMode::full_batch)
      adam_step(leaves, adam, cfg.learning_rate);

    EpochRecord rec;
    rec.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(order.size(), 1));
    rec.val = evaluate_split(params, val_w, pop, res.normalizer, res.model_config, sg);
    if (rec.val.mae < best_mae) {
      best_mae = rec.val.mae;
      best = params.clone();
      best_epoch = epoch;
    }
    res.history.push_back(rec);
  }

  res.params = std::move(best);
  res.best_epoch = best_epoch;
  return res;
}

Tensor baseline_persistence(const WindowBatch& windows, std::size_t w) {
  const std::size_t n = windows.n_patches, l = windows.horizon;
  const Tensor last = windows.raw_last_window(w);
  Tensor out({n, l});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < l; ++h)
      out[i * l + h] = last[i * kNumFeatures + kInfected];
  return out;
}

Tensor baseline_sir_fit(const WindowBatch& windows, std::size_t w,
                        const std::vector<double>& population, std::size_t grid) {
  const std::size_t n = windows.n_patches, t = windows.t_in, l = windows.horizon;
  if (population.size() != n) throw ContractError("baseline_sir_fit: population size mismatch");
  if (grid < 2) throw ConfigError("baseline_sir_fit: grid must have at least 2 points");
  const double step = 1.0 / static_cast<double>(grid - 1);

  std::vector<double> best_beta(n, 0.0), best_gamma(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double best_sse = std::numeric_limits<double>::infinity();
    for (std::size_t bi = 0; bi < grid; ++bi) {
      const double beta = static_cast<double>(bi) * step;
      for (std::size_t gi = 0; gi < grid; ++gi) {
        const double gamma = static_cast<double>(gi) * step;
        double sse = 0.0;
        for (std::size_t d = 0; d + 1 < t; ++d) {
          const std::size_t base = ((w * n + i) * t + d) * kNumFeatures;
          SIRState st{{windows.raw_inputs[base + kSusceptible]},
                      {windows.raw_inputs[base + kInfected]},
                      {windows.raw_inputs[base + kRecovered]},
                      {population[i]}};
          const SIRState nx = sir_step(st, {beta}, {gamma});
          const double obs =
              windows.raw_inputs[((w * n + i) * t + d + 1) * kNumFeatures + kInfected];
          const double e = nx.i[0] - obs;
          sse += e * e;
        }
        if (sse < best_sse) {
          best_sse = sse;
          best_beta[i] = beta;
          best_gamma[i] = gamma;
        }
      }
    }
  }

  const Tensor last = windows.raw_last_window(w);
  SIRState seed;
  seed.s.resize(n);
  seed.i.resize(n);
  seed.r.resize(n);
  seed.population = population;
  for (std::size_t i = 0; i < n; ++i) {
    seed.s[i] = last[i * kNumFeatures + kSusceptible];
    seed.i[i] = last[i * kNumFeatures + kInfected];
    seed.r[i] = last[i * kNumFeatures + kRecovered];
  }
  return sir_rollout(seed, best_beta, best_gamma, l);
}

}  // namespace bdgstn
