#include <doctest.h>

#include <cmath>
#include <random>

#include "bdgstn/graphs.hpp"

using namespace bdgstn;

namespace {

Tensor rand_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

void check_row_stochastic(const Tensor& w, std::size_t n) {
  REQUIRE(w.size() % n == 0);
  const std::size_t rows = w.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = w[r * n + j];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

}  // namespace

TEST_CASE("backbone logits are E E^T") {
  auto e0 = backbone_logits(make_const(Tensor({3, 2})));
  for (std::size_t i = 0; i < 9; ++i) CHECK(e0->value[i] == 0.0);

  auto hand = backbone_logits(make_const(Tensor({2, 1}, {1.0, 2.0})));
  CHECK(hand->value[0] == 1.0);
  CHECK(hand->value[1] == 2.0);
  CHECK(hand->value[2] == 2.0);
  CHECK(hand->value[3] == 4.0);

  for (int s = 0; s < 20; ++s) {
    const std::size_t n = 4;
    auto l = backbone_logits(make_const(rand_tensor({n, 8}, 300 + s)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(std::fabs(l->value[i * n + j] - l->value[j * n + i]) <= 1e-12);
  }
}

TEST_CASE("temporal logits: shape, zero case, causality") {
  const std::size_t n = 3, t = 5, dh = 4, dtcn = 2;
  auto zero = temporal_logits(make_const(Tensor({n, t, dh})),
                              make_const(Tensor({3, dh, dtcn})), make_const(Tensor({dtcn})),
                              1);
  CHECK(zero->value.shape() == Shape{t, n, n});
  for (std::size_t i = 0; i < zero->value.size(); ++i) CHECK(zero->value[i] == 0.0);

  const Tensor h = rand_tensor({n, t, dh}, 1);
  const Tensor f = rand_tensor({3, dh, dtcn}, 2);
  const Tensor b = rand_tensor({dtcn}, 3);
  auto base = temporal_logits(make_const(h), make_const(f), make_const(b), 1);
  Tensor hp = h;
  const std::size_t t0 = 3;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dh; ++k) hp[(i * t + t0) * dh + k] += 0.5;
  auto pert = temporal_logits(make_const(hp), make_const(f), make_const(b), 1);
  for (std::size_t s = 0; s < t0; ++s)
    for (std::size_t e = 0; e < n * n; ++e)
      CHECK(pert->value[s * n * n + e] == base->value[s * n * n + e]);

  // N=1: each slice is the squared norm of the TCN embedding at t.
  auto one = temporal_logits(make_const(rand_tensor({1, t, dh}, 4)), make_const(f),
                             make_const(b), 1);
  for (std::size_t s = 0; s < t; ++s) CHECK(one->value[s] >= 0.0);
}

TEST_CASE("fuse_dynamic stochasticity and hand case") {
  const std::size_t n = 4, t = 3;
  for (int s = 0; s < 100; ++s) {
    GraphSet gs = fuse_dynamic(make_const(rand_tensor({n, n}, 500 + s, -2.0, 2.0)),
                               make_const(rand_tensor({t, n, n}, 600 + s, -2.0, 2.0)));
    check_row_stochastic(gs.back->value, n);
    check_row_stochastic(gs.temp->value, n);
    check_row_stochastic(gs.dyn->value, n);
  }

  // All-equal logits -> uniform A_dyn.
  GraphSet u = fuse_dynamic(make_const(Tensor({2, 2}, 0.7)), make_const(Tensor({3, 2, 2}, 0.7)));
  for (std::size_t i = 0; i < u.dyn->value.size(); ++i)
    CHECK(u.dyn->value[i] == doctest::Approx(0.5).epsilon(1e-12));

  // Inner softmaxes give back row (0.25,0.75) and temp row (0.75,0.25);
  // their sum is (1,1), so the fused row is exactly (0.5,0.5).
  const double d = std::log(3.0);
  GraphSet h = fuse_dynamic(make_const(Tensor({2, 2}, {0.0, d, 0.0, d})),
                            make_const(Tensor({1, 2, 2}, {d, 0.0, d, 0.0})));
  CHECK(h.back->value[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(h.back->value[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(h.temp->value[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(h.dyn->value[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(h.dyn->value[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Determinism across calls.
  const Tensor bl = rand_tensor({n, n}, 700), tl = rand_tensor({t, n, n}, 701);
  GraphSet g1 = fuse_dynamic(make_const(bl), make_const(tl));
  GraphSet g2 = fuse_dynamic(make_const(bl), make_const(tl));
  for (std::size_t i = 0; i < g1.dyn->value.size(); ++i)
    CHECK(g1.dyn->value[i] == g2.dyn->value[i]);
}

TEST_CASE("geography graph") {
  Tensor pair({2, 2}, {0, 1, 1, 0});
  Tensor g = geography_graph(pair);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == 0.5);

  Tensor lonely({3, 3});
  Tensor gi = geography_graph(lonely);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(gi[i * 3 + j] == (i == j ? 1.0 : 0.0));

  for (int s = 0; s < 20; ++s) {
    const std::size_t n = 5;
    Tensor a({n, n});
    std::mt19937_64 rng(s);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng() % 2) a[i * n + j] = a[j * n + i] = 1.0;
    check_row_stochastic(geography_graph(a), n);
  }
  CHECK_THROWS_AS(geography_graph(Tensor({2, 3})), DimensionError);
}

TEST_CASE("gravity graph") {
  // pops (100,400), distance 2 km -> raw off-diagonal 100*400/4 = 10000;
  // diagonal takes the row max, so each row normalizes to (0.5, 0.5).
  // 2 km along a meridian is 2/6371 rad = (360/(2*pi*6371)) degrees of latitude.
  const double dlat = 2.0 * 180.0 / (3.14159265358979323846 * 6371.0);
  CHECK(haversine_km(0.0, 0.0, dlat, 0.0) == doctest::Approx(2.0).epsilon(1e-9));
  Tensor g = gravity_graph({100.0, 400.0}, {{0.0, 0.0}, {dlat, 0.0}});
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(0.5).epsilon(1e-9));

  // Equal pops, near-equal pairwise distances (planar equilateral triangle
  // projected to the sphere) -> near-uniform off-diagonals.
  Tensor eq = gravity_graph({10.0, 10.0, 10.0},
                            {{0.0, 0.0}, {0.0, 1.0}, {0.8660254037844386, 0.5}});
  CHECK(eq[0 * 3 + 1] == doctest::Approx(eq[0 * 3 + 2]).epsilon(1e-3));

  // Coincident coordinates hit the distance floor instead of dividing by 0.
  Tensor co = gravity_graph({5.0, 5.0}, {{1.0, 1.0}, {1.0, 1.0}});
  CHECK(co.all_finite());
  check_row_stochastic(co, 2);

  CHECK_THROWS_AS(gravity_graph({1.0, 2.0}, {{0.0, 0.0}}), ConfigError);
  CHECK_THROWS_AS(gravity_graph({-1.0, 2.0}, {{0.0, 0.0}, {1.0, 1.0}}), ConfigError);
}

TEST_CASE("dtw distance oracles") {
  CHECK(dtw_distance({1, 2, 3}, {1, 2, 2, 3}) == 0.0);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> a(8), b(6);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    CHECK(dtw_distance(a, a) == 0.0);
    const double d = dtw_distance(a, b);
    CHECK(d >= 0.0);
    CHECK(d == dtw_distance(b, a));
  }
  CHECK_THROWS_AS(dtw_distance({}, {1.0}), ContractError);
}

TEST_CASE("dtw graph") {
  Tensor s({3, 6});
  for (std::size_t t = 0; t < 6; ++t) {
    s[0 * 6 + t] = static_cast<double>(t);        // ramp
    s[1 * 6 + t] = 2.0 * static_cast<double>(t);  // scaled ramp, same z-scores
    s[2 * 6 + t] = (t % 2 == 0) ? 1.0 : -1.0;     // oscillation
  }
  Tensor g = dtw_graph(s);
  check_row_stochastic(g, 3);
  // The two ramps are z-score identical, so they are each other's strongest link.
  CHECK(g[0 * 3 + 1] > g[0 * 3 + 2]);
  CHECK(g[0 * 3 + 1] == doctest::Approx(g[0 * 3 + 0]).epsilon(1e-12));

  // Constant series map to zeros; graph stays finite and stochastic.
  Tensor c({2, 4}, 3.0);
  Tensor gc = dtw_graph(c);
  CHECK(gc.all_finite());
  check_row_stochastic(gc, 2);
  CHECK_THROWS_AS(dtw_graph(Tensor({2, 1})), ContractError);
}

TEST_CASE("pcc graph") {
  Tensor s({3, 5});
  for (std::size_t t = 0; t < 5; ++t) {
    s[0 * 5 + t] = static_cast<double>(t);
    s[1 * 5 + t] = 3.0 * static_cast<double>(t) + 2.0;  // rho = 1 with row 0
    s[2 * 5 + t] = -static_cast<double>(t);             // rho = -1 with row 0
  }
  Tensor g = pcc_graph(s);
  check_row_stochastic(g, 3);
  CHECK(g[0 * 3 + 2] == 0.0);  // anti-correlation clipped
  CHECK(g[0 * 3 + 0] == doctest::Approx(0.5).epsilon(1e-9));  // raw row (1,1,0)
  CHECK(g[0 * 3 + 1] == doctest::Approx(0.5).epsilon(1e-9));

  // Constant row keeps only its self-weight.
  Tensor c({2, 4});
  for (std::size_t t = 0; t < 4; ++t) {
    c[t] = static_cast<double>(t);
    c[4 + t] = 7.0;
  }
  Tensor gc = pcc_graph(c);
  CHECK(gc[1 * 2 + 1] == 1.0);
  CHECK(gc[1 * 2 + 0] == 0.0);
  CHECK_THROWS_AS(pcc_graph(Tensor({2, 1})), ContractError);
}

TEST_CASE("row_normalize zero rows become one-hot diagonal") {
  Tensor w({2, 2}, {0.0, 0.0, 3.0, 1.0});
  Tensor r = row_normalize(w);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 0.75);
  CHECK(r[3] == 0.25);
  CHECK_THROWS_AS(row_normalize(Tensor({2, 3})), DimensionError);
}
