#include "bdgstn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "bdgstn/graphs.hpp"
#include "bdgstn/model.hpp"

namespace bdgstn {

namespace {

Tensor knn_adjacency(const std::vector<std::array<double, 2>>& coords, std::size_t k) {
  const std::size_t n = coords.size();
  Tensor adj({n, n});
  if (n < 2) return adj;
  k = std::min(k, n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k),
                      others.end(), [&](std::size_t a, std::size_t b) {
                        return haversine_km(coords[i][0], coords[i][1], coords[a][0],
                                            coords[a][1]) <
                               haversine_km(coords[i][0], coords[i][1], coords[b][0],
                                            coords[b][1]);
                      });
    for (std::size_t m = 0; m < k; ++m) {
      adj[i * n + others[m]] = 1.0;
      adj[others[m] * n + i] = 1.0;  // symmetrize
    }
  }
  return adj;
}

}  // namespace

EpidemicDataset simulate(const SimConfig& cfg) {
  if (cfg.n_patches == 0) throw ConfigError("simulate: n_patches must be positive");
  if (cfg.days == 0) throw ConfigError("simulate: days must be positive");
  if (cfg.pop_min <= 0.0 || cfg.pop_max < cfg.pop_min)
    throw ConfigError("simulate: bad population range");

  const std::size_t n = cfg.n_patches, t = cfg.days;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  EpidemicDataset ds;
  ds.first_day = days_from_civil(2024, 1, 1);
  ds.n_days = t;
  ds.series = Tensor({n, t, kNumFeatures});
  ds.population.resize(n);
  ds.patch_ids.resize(n);

  std::vector<std::array<double, 2>> coords(n);
  std::vector<double> beta(n), gamma(n);
  const double lo = std::log(cfg.pop_min), hi = std::log(cfg.pop_max);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%03zu", i);
    ds.patch_ids[i] = buf;
    ds.population[i] = std::floor(std::exp(lo + (hi - lo) * u01(rng)));
    coords[i] = {25.0 + 23.0 * u01(rng), -124.0 + 57.0 * u01(rng)};
    beta[i] = cfg.beta_min + (cfg.beta_max - cfg.beta_min) * u01(rng);
    gamma[i] = cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * u01(rng);
  }
  ds.coordinates = coords;
  ds.geo_adjacency = knn_adjacency(coords, 3);

  // Row-stochastic mobility: residents mix mostly within their home patch and
  // spend a small travel fraction spread across the others by gravity weight.
  // Weak, population/distance-skewed coupling staggers the patch outbreaks.
  Tensor mobility({n, n});
  for (std::size_t i = 0; i < n; ++i) mobility[i * n + i] = 1.0;
  if (!cfg.identity_mobility && n > 1) {
    if (cfg.travel_frac < 0.0 || cfg.travel_frac > 1.0)
      throw ConfigError("simulate: travel_frac must be in [0, 1]");
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      std::vector<double> w(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d = std::max(
            haversine_km(coords[i][0], coords[i][1], coords[j][0], coords[j][1]), 1.0);
        w[j] = ds.population[i] * ds.population[j] / (d * d);
        row += w[j];
      }
      mobility[i * n + i] = 1.0 - cfg.travel_frac;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) mobility[i * n + j] = cfg.travel_frac * w[j] / row;
    }
  }

  // One seeded patch with 0.1% of its population infected.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t seed_patch = pick(rng);
  SIRState st;
  st.s.resize(n);
  st.i.assign(n, 0.0);
  st.r.assign(n, 0.0);
  st.population = ds.population;
  for (std::size_t i = 0; i < n; ++i) {
    st.i[i] = i == seed_patch ? cfg.initial_infected_frac * ds.population[i] : 0.0;
    st.s[i] = ds.population[i] - st.i[i];
    conserve_exact(st.s[i], st.i[i], st.r[i], ds.population[i]);
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> force(n);
  for (std::size_t d = 0; d < t; ++d) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = st.s[i], inf = st.i[i], r = st.r[i];
      if (cfg.noise) {
        inf = inf * std::exp(cfg.noise_sigma * gauss(rng));
        inf = std::clamp(inf, 0.0, ds.population[i] - r);
        s = ds.population[i] - inf - r;  // reporting noise must not break conservation
        conserve_exact(s, inf, r, ds.population[i]);
      }
      const std::size_t base = (i * t + d) * kNumFeatures;
      ds.series[base + kSusceptible] = s;
      ds.series[base + kInfected] = inf;
      ds.series[base + kRecovered] = r;
    }
    if (d + 1 == t) break;
    // lambda_i*S_i with lambda_i = beta_i sum_j M_ij I_j/N_j, written so the
    // identity-mobility case is bit-identical to sir_step.
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += mobility[i * n + j] * ((ds.population[i] / ds.population[j]) * st.i[j]);
      force[i] = acc;
    }
    st = sir_step_with_force(st, beta, gamma, force);
  }
  return ds;
}

}  // namespace bdgstn
