#include "bdgstn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace bdgstn {

PointMetrics point_metrics(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw ContractError("point_metrics: size mismatch");
  if (pred.empty()) throw ContractError("point_metrics: empty input");
  PointMetrics m;
  double se = 0.0, ape = 0.0;
  std::size_t mape_n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    m.mae += std::fabs(e);
    se += e * e;
    if (std::fabs(target[i]) >= 1.0) {  // zero-target guard
      ape += std::fabs(e / target[i]);
      ++mape_n;
    }
  }
  const double inv = 1.0 / static_cast<double>(pred.size());
  m.mae *= inv;
  m.rmse = std::sqrt(se * inv);
  m.mape = mape_n > 0 ? 100.0 * ape / static_cast<double>(mape_n) : 0.0;
  m.skipped_fraction = 1.0 - static_cast<double>(mape_n) * inv;
  return m;
}

CorrMetrics corr_metrics(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.size() < 2)
    throw ContractError("corr_metrics: need at least 2 paired elements");
  const double n = static_cast<double>(pred.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mx += pred[i];
    my += target[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mx, dy = target[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  vx /= n;
  vy /= n;
  cov /= n;
  CorrMetrics c;
  if (vx <= 0.0 || vy <= 0.0) {
    c.degenerate = true;
    return c;
  }
  const double sx = std::sqrt(vx), sy = std::sqrt(vy);
  c.pcc = cov / (sx * sy);
  c.ccc = 2.0 * c.pcc * sx * sy / (vx + vy + (mx - my) * (mx - my));
  return c;
}

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> target) {
  const PointMetrics p = point_metrics(pred, target);
  const CorrMetrics c = corr_metrics(pred, target);
  MetricsReport r;
  r.mae = p.mae;
  r.rmse = p.rmse;
  r.mape = p.mape;
  r.mape_skipped_fraction = p.skipped_fraction;
  r.pcc = c.pcc;
  r.ccc = c.ccc;
  r.degenerate = c.degenerate;
  return r;
}

double discrete_entropy(std::span<const double> weights, int bins) {
  if (weights.empty()) throw ContractError("discrete_entropy: empty input");
  if (bins < 1) throw ConfigError("discrete_entropy: bins must be positive");
  std::vector<std::size_t> hist(static_cast<std::size_t>(bins), 0);
  for (double w : weights) {
    if (w < 0.0 || w > 1.0) throw ContractError("discrete_entropy: weight outside [0, 1]");
    auto b = static_cast<std::size_t>(w * bins);
    if (b >= hist.size()) b = hist.size() - 1;  // w == 1.0
    ++hist[b];
  }
  const double n = static_cast<double>(weights.size());
  double h = 0.0;
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

double weight_variance(std::span<const double> weights) {
  if (weights.empty()) throw ContractError("weight_variance: empty input");
  double mean = 0.0;
  for (double w : weights) mean += w;
  mean /= static_cast<double>(weights.size());
  double var = 0.0;
  for (double w : weights) var += (w - mean) * (w - mean);
  return var / static_cast<double>(weights.size());
}

double digamma(double x) {
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x, inv2 = inv * inv;
  return acc + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

double ksg_mutual_information(std::span<const double> x, std::span<const double> y, int k,
                              std::uint64_t jitter_seed) {
  const std::size_t n = x.size();
  if (y.size() != n) throw ContractError("ksg_mutual_information: size mismatch");
  if (k < 1 || n <= static_cast<std::size_t>(k))
    throw ContractError("ksg_mutual_information: need more samples than neighbors");

  std::mt19937_64 rng(jitter_seed);
  std::uniform_real_distribution<double> u(-1e-10, 1e-10);
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  for (auto& v : xs) v += u(rng);
  for (auto& v : ys) v += u(rng);

  double psi_sum = 0.0;
  std::vector<double> dists;
  dists.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dists.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dists.push_back(std::max(std::fabs(xs[j] - xs[i]), std::fabs(ys[j] - ys[i])));
    }
    std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
    const double eps = dists[static_cast<std::size_t>(k - 1)];
    std::size_t nx = 0, ny = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (std::fabs(xs[j] - xs[i]) < eps) ++nx;
      if (std::fabs(ys[j] - ys[i]) < eps) ++ny;
    }
    psi_sum += digamma(static_cast<double>(nx + 1)) + digamma(static_cast<double>(ny + 1));
  }
  return digamma(static_cast<double>(k)) - psi_sum / static_cast<double>(n) +
         digamma(static_cast<double>(n));
}

InfoReport dynamic_graph_report(const std::vector<Tensor>& backs,
                                const std::vector<Tensor>& temps,
                                const std::vector<Tensor>& dyns, std::size_t max_mi_samples,
                                int bins, int k, std::uint64_t seed) {
  if (backs.empty() || temps.size() != backs.size() || dyns.size() != backs.size())
    throw ContractError("dynamic_graph_report: mismatched window samples");
  InfoReport rep;
  rep.bins = bins;
  rep.k = k;

  std::vector<double> back_pool, temp_pool;
  std::vector<double> mi_back_x, mi_temp_x, mi_y;
  for (std::size_t w = 0; w < backs.size(); ++w) {
    const Tensor& b = backs[w];
    const Tensor& tm = temps[w];
    const Tensor& dy = dyns[w];
    const std::size_t nn = b.size();
    const std::size_t t_len = tm.dim(0);
    for (std::size_t e = 0; e < nn; ++e) back_pool.push_back(b[e]);
    for (std::size_t i = 0; i < tm.size(); ++i) temp_pool.push_back(tm[i]);
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t e = 0; e < nn; ++e) {
        mi_back_x.push_back(b[e]);
        mi_temp_x.push_back(tm[t * nn + e]);
        mi_y.push_back(dy[t * nn + e]);
      }
  }

  rep.h_back = discrete_entropy(back_pool, bins);
  rep.h_time = discrete_entropy(temp_pool, bins);
  rep.d_back = weight_variance(back_pool);
  rep.d_time = weight_variance(temp_pool);

  // Deterministic subsample for the O(n^2) estimator.
  if (mi_y.size() > max_mi_samples) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(mi_y.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_mi_samples);
    std::sort(idx.begin(), idx.end());
    std::vector<double> bx, tx, yy;
    for (std::size_t i : idx) {
      bx.push_back(mi_back_x[i]);
      tx.push_back(mi_temp_x[i]);
      yy.push_back(mi_y[i]);
    }
    mi_back_x = std::move(bx);
    mi_temp_x = std::move(tx);
    mi_y = std::move(yy);
  }
  rep.mi_samples = mi_y.size();
  rep.i_back = ksg_mutual_information(mi_back_x, mi_y, k, seed + 1);
  rep.i_time = ksg_mutual_information(mi_temp_x, mi_y, k, seed + 2);
  rep.back_lower_entropy = rep.h_back < rep.h_time;
  rep.back_lower_mi = rep.i_back < rep.i_time;
  return rep;
}

}  // namespace bdgstn
