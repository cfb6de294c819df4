#pragma once

#include <array>
#include <vector>

#include "bdgstn/autodiff.hpp"
#include "bdgstn/tensor.hpp"

namespace bdgstn {

/// Learned row-stochastic graphs: static backbone, per-step temporal,
/// and their softmax fusion used for spatial aggregation.
struct GraphSet {
  Var back;  // N x N
  Var temp;  // T x N x N
  Var dyn;   // T x N x N
};

// Raw backbone logits E E^T (symmetric by construction).
Var backbone_logits(const Var& embedding);

// Per-step gram logits of the causal TCN embedding of H (N x T x D_H).
Var temporal_logits(const Var& h, const Var& tcn_filters, const Var& tcn_bias, int dilation);

// A_back = softmax(relu(back)), A_temp = softmax(relu(temp)) per step,
// A_dyn = softmax(A_back + A_temp) per step with A_back broadcast over time.
GraphSet fuse_dynamic(const Var& back_logits, const Var& temp_logits);

// Static comparison graphs. All are row-stochastic.
Tensor geography_graph(const Tensor& adjacency);
Tensor gravity_graph(const std::vector<double>& population,
                     const std::vector<std::array<double, 2>>& coordinates);
Tensor dtw_graph(const Tensor& series);  // N x T infected channel
Tensor pcc_graph(const Tensor& series);  // N x T infected channel

// Classic O(T^2) dynamic-programming DTW with absolute-difference cost.
double dtw_distance(const std::vector<double>& a, const std::vector<double>& b);

double haversine_km(double lat1, double lon1, double lat2, double lon2);

// Normalize each row to sum 1 (rows of all zeros become one-hot diagonal).
Tensor row_normalize(Tensor w);

}  // namespace bdgstn
