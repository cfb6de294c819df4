#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdgstn/autodiff.hpp"
#include "bdgstn/data.hpp"
#include "bdgstn/graphs.hpp"

namespace bdgstn {

enum class GraphMode { fused, backbone_only, temporal_only, geography, gravity, dtw, pcc };

GraphMode parse_graph_mode(const std::string& s);
std::string graph_mode_name(GraphMode m);
bool graph_mode_is_static(GraphMode m);

enum class Ablation { none, temporal_only, spatial_only, no_loss, no_trend };

Ablation parse_ablation(const std::string& s);
std::string ablation_name(Ablation a);

struct ModelConfig {
  std::size_t n_patches = 0;
  std::size_t t_in = 5;
  std::size_t horizon = 5;
  std::size_t d_h = 32;    // input embedding and DLinear width
  std::size_t d_ada = 32;  // backbone embedding width
  std::size_t d_tcn = 8;   // TCN output width
  std::size_t d_st = 32;   // GCN output width
  std::size_t tcn_kernel = 3;
  int tcn_dilation = 1;
  std::size_t ma_kernel = 3;  // DLinear moving-average kernel, odd, < t_in
  GraphMode graph_mode = GraphMode::fused;
  Ablation ablation = Ablation::none;
};

/// Every learnable parameter of the model, as autodiff leaves.
struct BDGSTNParams {
  Var embed_w, embed_b;  // 3 -> D_H
  Var backbone_e;        // N x D_ada
  Var tcn_f, tcn_b;      // r x D_H x D_TCN, D_TCN
  Var trend_w, trend_b;  // D_H -> D_H
  Var rem_w, rem_b;      // D_H -> D_H
  Var gcn_w, gcn_b;      // D_H -> D_ST
  Var st_w, st_b;        // T_in*D_ST -> L
  Var epi_w, epi_b;      // T_in*D_ST -> 2

  static BDGSTNParams init(const ModelConfig& cfg, std::uint64_t seed);
  std::vector<std::pair<std::string, Var>> named() const;
  std::vector<Var> all() const;
  BDGSTNParams clone() const;  // deep copy of values, fresh leaves
};

struct SIRState {
  std::vector<double> s, i, r, population;
};

/// Absorbs floating-point residue so (s + i) + r == cap bitwise, preferring
/// to adjust s.
void conserve_exact(double& s, double& i, double& r, double cap);

/// One forward-Euler day step of the SIR dynamics, clamped to [0, N_i]
/// and rescaled so S+I+R = N_i.
SIRState sir_step(const SIRState& state, const std::vector<double>& beta,
                  const std::vector<double>& gamma);

/// Same step with an externally supplied force-of-infection source
/// (effective infected count); sir_step passes the state's own I.
SIRState sir_step_with_force(const SIRState& state, const std::vector<double>& beta,
                             const std::vector<double>& gamma,
                             const std::vector<double>& infectious_eff);

/// L-step rollout returning the infected component, N x L raw counts.
Tensor sir_rollout(const SIRState& seed, const std::vector<double>& beta,
                   const std::vector<double>& gamma, std::size_t horizon);

struct ForecastOutput {
  Var y_st;              // N x L, normalized units
  Var y_phy;             // N x L, normalized; null under the no-loss ablation
  Tensor y_phy_raw;      // N x L raw counts (empty when y_phy is null)
  Var beta, gamma;       // length N, in (0, 1); null under no-loss
  std::optional<GraphSet> graphs;  // populated when graph_mode == fused
};

/// Full BDGSTN forward pass on one window. static_graph must be a
/// row-stochastic N x N matrix when graph_mode names a static graph.
ForecastOutput model_forward(const BDGSTNParams& params, const Tensor& inputs /*N x T x 3*/,
                             const Tensor& raw_last /*N x 3*/,
                             const std::vector<double>& population, const Normalizer& norm,
                             const ModelConfig& cfg, const Tensor* static_graph = nullptr);

// Exposed pieces of the forward pass.
Var embed(const Var& x, const Var& w, const Var& b);
std::pair<Var, Var> series_decomp(const Var& h, std::size_t ma_kernel);  // trend, remainder
Var dlinear(const Var& h, const BDGSTNParams& params, const ModelConfig& cfg);
Var gcn_layer(const Var& h_t, const Var& a_dyn, const Var& w, const Var& b);
std::pair<Var, Var> epi_rates(const Var& flat, const Var& w, const Var& b);  // beta, gamma

}  // namespace bdgstn
