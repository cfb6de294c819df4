#include "bdgstn/graphs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace bdgstn {

Var backbone_logits(const Var& embedding) { return matmul_nt(embedding, embedding); }

Var temporal_logits(const Var& h, const Var& tcn_filters, const Var& tcn_bias, int dilation) {
  return timewise_gram(causal_conv1d(h, tcn_filters, tcn_bias, dilation));
}

GraphSet fuse_dynamic(const Var& back_logits, const Var& temp_logits) {
  GraphSet gs;
  gs.back = row_softmax(relu(back_logits));
  gs.temp = row_softmax(relu(temp_logits));
  gs.dyn = row_softmax(add_broadcast_time(gs.back, gs.temp));
  return gs;
}

Tensor row_normalize(Tensor w) {
  if (w.rank() != 2 || w.dim(0) != w.dim(1))
    throw DimensionError("row_normalize: expected square matrix");
  const std::size_t n = w.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += w[i * n + j];
    if (s <= 0.0) {
      for (std::size_t j = 0; j < n; ++j) w[i * n + j] = (i == j) ? 1.0 : 0.0;
    } else {
      for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= s;
    }
  }
  return w;
}

Tensor geography_graph(const Tensor& adjacency) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1))
    throw DimensionError("geography_graph: expected square adjacency");
  const std::size_t n = adjacency.dim(0);
  Tensor w = adjacency;
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;  // self-loop
  return row_normalize(std::move(w));
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0;
  const double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

Tensor gravity_graph(const std::vector<double>& population,
                     const std::vector<std::array<double, 2>>& coordinates) {
  const std::size_t n = population.size();
  if (coordinates.size() != n)
    throw ConfigError("gravity_graph: coordinates missing or wrong length");
  for (double p : population)
    if (p <= 0) throw ConfigError("gravity_graph: populations must be positive");
  constexpr double kMinDistSq = 1e-6;  // km^2 floor for coincident patches
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = haversine_km(coordinates[i][0], coordinates[i][1], coordinates[j][0],
                                    coordinates[j][1]);
      w[i * n + j] = population[i] * population[j] / std::max(d * d, kMinDistSq);
    }
  // A patch influences itself at least as much as any neighbor.
  for (std::size_t i = 0; i < n; ++i) {
    double mx = 0.0;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, w[i * n + j]);
    w[i * n + i] = mx > 0.0 ? mx : 1.0;
  }
  return row_normalize(std::move(w));
}

double dtw_distance(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t la = a.size(), lb = b.size();
  if (la == 0 || lb == 0) throw ContractError("dtw_distance: empty series");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(lb + 1, kInf), cur(lb + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= la; ++i) {
    cur[0] = kInf;
    for (std::size_t j = 1; j <= lb; ++j) {
      const double cost = std::fabs(a[i - 1] - b[j - 1]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[lb];
}

namespace {

// Per-row z-score; constant rows map to zeros.
std::vector<std::vector<double>> zscore_rows(const Tensor& series) {
  const std::size_t n = series.dim(0), t_len = series.dim(1);
  std::vector<std::vector<double>> out(n, std::vector<double>(t_len));
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) mean += series[i * t_len + t];
    mean /= static_cast<double>(t_len);
    double var = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double d = series[i * t_len + t] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(t_len));
    for (std::size_t t = 0; t < t_len; ++t)
      out[i][t] = sd > 1e-12 ? (series[i * t_len + t] - mean) / sd : 0.0;
  }
  return out;
}

}  // namespace

Tensor dtw_graph(const Tensor& series) {
  if (series.rank() != 2 || series.dim(1) < 2)
    throw ContractError("dtw_graph: expected N x T series with T >= 2");
  const std::size_t n = series.dim(0);
  const auto z = zscore_rows(series);
  Tensor dist({n, n});
  std::vector<double> offdiag;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dtw_distance(z[i], z[j]);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
      offdiag.push_back(d);
    }
  double sigma = 0.0;
  if (!offdiag.empty()) {
    double mean = 0.0;
    for (double d : offdiag) mean += d;
    mean /= static_cast<double>(offdiag.size());
    double var = 0.0;
    for (double d : offdiag) var += (d - mean) * (d - mean);
    sigma = std::sqrt(var / static_cast<double>(offdiag.size()));
  }
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dist[i * n + j];
      w[i * n + j] = sigma > 1e-12 ? std::exp(-(d * d) / (sigma * sigma)) : 1.0;
    }
  return row_normalize(std::move(w));
}

Tensor pcc_graph(const Tensor& series) {
  if (series.rank() != 2 || series.dim(1) < 2)
    throw ContractError("pcc_graph: expected N x T series with T >= 2");
  const std::size_t n = series.dim(0), t_len = series.dim(1);
  std::vector<double> mean(n, 0.0), sd(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < t_len; ++t) mean[i] += series[i * t_len + t];
    mean[i] /= static_cast<double>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      const double d = series[i * t_len + t] - mean[i];
      sd[i] += d * d;
    }
    sd[i] = std::sqrt(sd[i]);
  }
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    w[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double rho = 0.0;
      if (sd[i] > 1e-12 && sd[j] > 1e-12) {
        double cov = 0.0;
        for (std::size_t t = 0; t < t_len; ++t)
          cov += (series[i * t_len + t] - mean[i]) * (series[j * t_len + t] - mean[j]);
        rho = cov / (sd[i] * sd[j]);
      }
      const double v = std::max(rho, 0.0);  // negative correlations clipped
      w[i * n + j] = v;
      w[j * n + i] = v;
    }
  }
  return row_normalize(std::move(w));
}

}  // namespace bdgstn
