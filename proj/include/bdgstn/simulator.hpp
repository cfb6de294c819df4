#pragma once

#include <cstdint>

#include "bdgstn/data.hpp"

namespace bdgstn {

/// Synthetic metapopulation SIR generator: per-patch rates, gravity
/// mobility coupling, multiplicative log-normal reporting noise on the
/// infected channel. Pure function of the seed.
struct SimConfig {
  std::size_t n_patches = 10;
  std::size_t days = 200;
  std::uint64_t seed = 7;
  double pop_min = 1e4, pop_max = 1e6;  // log-uniform
  double beta_min = 0.2, beta_max = 0.4;
  double gamma_min = 0.05, gamma_max = 0.15;
  double initial_infected_frac = 0.001;  // one random patch is seeded
  double travel_frac = 0.01;             // share of contacts made outside the home patch
  double noise_sigma = 0.05;
  bool noise = true;
  bool identity_mobility = false;  // decouples patches; matches sir_step exactly
};

EpidemicDataset simulate(const SimConfig& cfg);

}  // namespace bdgstn
