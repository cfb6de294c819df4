#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdgstn/data.hpp"
#include "bdgstn/metrics.hpp"
#include "bdgstn/model.hpp"

namespace bdgstn {

enum class BatchMode { per_window, full_batch };

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-4;
  std::size_t t_in = 5;
  std::size_t horizon = 5;
  std::uint64_t seed = 42;
  GraphMode graph_mode = GraphMode::fused;
  Ablation ablation = Ablation::none;
  BatchMode batch_mode = BatchMode::full_batch;
  std::array<double, 3> split_ratios = {0.6, 0.2, 0.2};
};

/// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
  std::vector<Tensor> m, v;
  std::int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState init(const std::vector<Var>& params);
};

void adam_step(const std::vector<Var>& params, AdamState& state, double lr);

/// Joint MAE over both heads; the physics term is dropped when y_phy is null.
Var joint_loss(const Var& y_st, const Var& y_phy, const Var& y);

struct EpochRecord {
  double train_loss = 0.0;
  MetricsReport val;
};

struct TrainResult {
  BDGSTNParams params;      // best-on-validation-MAE checkpoint
  ModelConfig model_config;
  Normalizer normalizer;
  SplitRanges splits;
  Tensor static_graph;      // empty unless graph_mode is static
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Builds the static comparison graph named by the mode from training
/// data/metadata; empty tensor for learned modes.
Tensor build_static_graph(const EpidemicDataset& ds, DayRange train, GraphMode mode);

TrainResult train(const EpidemicDataset& ds, const TrainConfig& cfg);

MetricsReport evaluate_split(const BDGSTNParams& params, const WindowBatch& windows,
                             const std::vector<double>& population, const Normalizer& norm,
                             const ModelConfig& cfg, const Tensor* static_graph = nullptr);

/// Denormalized point forecasts for every window, B x N x L.
Tensor predict_windows(const BDGSTNParams& params, const WindowBatch& windows,
                       const std::vector<double>& population, const Normalizer& norm,
                       const ModelConfig& cfg, const Tensor* static_graph = nullptr);

/// Repeats the last observed infected count across the horizon.
Tensor baseline_persistence(const WindowBatch& windows, std::size_t w);

/// Per-patch grid search of (beta, gamma) minimizing one-step-ahead
/// squared error over the input window, then an L-step rollout.
Tensor baseline_sir_fit(const WindowBatch& windows, std::size_t w,
                        const std::vector<double>& population, std::size_t grid = 101);

}  // namespace bdgstn
