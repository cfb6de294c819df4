#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bdgstn/tensor.hpp"

namespace bdgstn {

/// Five forecast-quality metrics over pooled (patch, horizon) pairs.
struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent, entries with |target| < 1 skipped
  double pcc = 0.0;
  double ccc = 0.0;
  double mape_skipped_fraction = 0.0;
  bool degenerate = false;  // zero variance in either series
};

struct PointMetrics {
  double mae = 0.0, rmse = 0.0, mape = 0.0, skipped_fraction = 0.0;
};

PointMetrics point_metrics(std::span<const double> pred, std::span<const double> target);

struct CorrMetrics {
  double pcc = 0.0, ccc = 0.0;
  bool degenerate = false;
};

CorrMetrics corr_metrics(std::span<const double> pred, std::span<const double> target);

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> target);

/// Shannon entropy in bits of a histogram over [0, 1].
double discrete_entropy(std::span<const double> weights, int bins = 50);

/// Population variance.
double weight_variance(std::span<const double> weights);

/// Kraskov k-NN mutual information estimate in nats; ties broken by a
/// seeded uniform jitter of magnitude 1e-10.
double ksg_mutual_information(std::span<const double> x, std::span<const double> y, int k = 3,
                              std::uint64_t jitter_seed = 0);

double digamma(double x);

/// Entropy/variance/MI diagnostics of a trained graph set, pooled over
/// sampled windows.
struct InfoReport {
  double h_back = 0.0, h_time = 0.0;  // bits
  double d_back = 0.0, d_time = 0.0;  // variances
  double i_back = 0.0, i_time = 0.0;  // nats
  bool back_lower_entropy = false;    // h_back < h_time
  bool back_lower_mi = false;         // i_back < i_time
  int bins = 50;
  int k = 3;
  std::size_t mi_samples = 0;
};

/// backs: per-window N x N backbone; temps/dyns: per-window T x N x N.
/// MI pairs (A_back[i,j], A_dyn[t,i,j]) and (A_temp[t,i,j], A_dyn[t,i,j])
/// over all (window, t, i, j), subsampled to max_mi_samples.
InfoReport dynamic_graph_report(const std::vector<Tensor>& backs,
                                const std::vector<Tensor>& temps,
                                const std::vector<Tensor>& dyns,
                                std::size_t max_mi_samples = 2000, int bins = 50, int k = 3,
                                std::uint64_t seed = 0);

}  // namespace bdgstn
