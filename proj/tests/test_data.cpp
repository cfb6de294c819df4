#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "bdgstn/data.hpp"

using namespace bdgstn;
namespace fs = std::filesystem;

namespace {

EpidemicDataset toy_dataset(std::size_t n, std::size_t days, std::uint64_t seed = 3) {
  EpidemicDataset ds;
  ds.first_day = days_from_civil(2024, 1, 1);
  ds.n_days = days;
  ds.series = Tensor({n, days, kNumFeatures});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (std::size_t p = 0; p < n; ++p) {
    ds.patch_ids.push_back("p" + std::to_string(p));
    ds.population.push_back(10000.0 + 1000.0 * static_cast<double>(p));
    for (std::size_t t = 0; t < days; ++t) {
      const double i = u(rng), r = u(rng);
      ds.series[(p * days + t) * kNumFeatures + kSusceptible] = ds.population[p] - i - r;
      ds.series[(p * days + t) * kNumFeatures + kInfected] = i;
      ds.series[(p * days + t) * kNumFeatures + kRecovered] = r;
    }
  }
  return ds;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bdgstn_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const char* f) const { return (path / f).string(); }
};

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  f << body;
}

const char* kMeta2 =
    "patch,population,lat,lon\n"
    "a,1000,10.0,20.0\n"
    "b,2000,11.0,21.0\n";

}  // namespace

TEST_CASE("civil date round trips") {
  CHECK(iso_date(days_from_civil(2020, 2, 29)) == "2020-02-29");
  CHECK(days_from_civil(2020, 3, 1) - days_from_civil(2020, 2, 29) == 1);
  CHECK(days_from_civil(1970, 1, 1) == 0);
  CHECK(parse_iso_date("2024-01-31", "test") == days_from_civil(2024, 1, 31));
  CHECK_THROWS_AS(parse_iso_date("2024-13-01", "test"), DataError);
  CHECK_THROWS_AS(parse_iso_date("garbage", "test"), DataError);
}

TEST_CASE("chrono_split floor arithmetic") {
  auto s245 = chrono_split(toy_dataset(2, 245));
  CHECK(s245.train.length() == 147);
  CHECK(s245.val.length() == 49);
  CHECK(s245.test.length() == 49);
  CHECK(s245.train.begin == 0);
  CHECK(s245.val.begin == 147);
  CHECK(s245.test.end == 245);

  auto s151 = chrono_split(toy_dataset(2, 151));
  CHECK(s151.train.length() == 90);
  CHECK(s151.val.length() == 30);
  CHECK(s151.test.length() == 31);

  CHECK_THROWS_AS(chrono_split(toy_dataset(2, 245), {1.0, 0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(chrono_split(toy_dataset(2, 245), {0.5, 0.2, 0.2}), ConfigError);
  // Splits too short for one window.
  CHECK_THROWS_AS(chrono_split(toy_dataset(2, 30), {0.6, 0.2, 0.2}, 5, 20), ConfigError);
}

TEST_CASE("normalizer endpoints, constants, round trip") {
  auto ds = toy_dataset(3, 50);
  // Make patch 1's infected channel constant.
  for (std::size_t t = 0; t < 50; ++t)
    ds.series[(1 * 50 + t) * kNumFeatures + kInfected] = 42.0;
  const DayRange train{0, 30};
  const Normalizer norm = fit_normalizer(ds, train);

  double mn = 1e300, mx = -1e300;
  for (std::size_t t = 0; t < 30; ++t) {
    mn = std::min(mn, ds.at(0, t, kInfected));
    mx = std::max(mx, ds.at(0, t, kInfected));
  }
  CHECK(norm.normalize(0, kInfected, mn) == 0.0);
  CHECK(norm.normalize(0, kInfected, mx) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(norm.normalize(1, kInfected, 42.0) == 0.0);  // constant channel maps to 0

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-50.0, 150.0);
  for (int k = 0; k < 100; ++k) {
    const double x = u(rng);
    const double rt = norm.denormalize(0, kInfected, norm.normalize(0, kInfected, x));
    CHECK(rt == doctest::Approx(x).epsilon(1e-9));
  }
  CHECK_THROWS_AS(fit_normalizer(ds, DayRange{5, 5}), ContractError);
}

TEST_CASE("make_windows counts and content") {
  auto ds = toy_dataset(3, 200);
  const Normalizer norm = fit_normalizer(ds, {0, 147});

  CHECK(make_windows(ds, norm, {0, 147}, 5, 20).n_windows == 123);
  CHECK(make_windows(ds, norm, {0, 25}, 5, 20).n_windows == 1);
  CHECK_THROWS_AS(make_windows(ds, norm, {0, 24}, 5, 20), ConfigError);

  const WindowBatch wb = make_windows(ds, norm, {10, 40}, 5, 3);
  CHECK(wb.n_windows == 30 - 5 - 3 + 1);
  CHECK(wb.starts.front() == 10);
  CHECK(wb.starts.back() == 10 + wb.n_windows - 1);
  // Window content lines up with the dataset.
  const Tensor in0 = wb.input_window(2);
  CHECK(in0[(0 * 5 + 1) * 3 + kInfected] ==
        norm.normalize(0, kInfected, ds.at(0, 13, kInfected)));
  const Tensor last = wb.raw_last_window(2);
  CHECK(last[0 * 3 + kRecovered] == ds.at(0, 16, kRecovered));
  const Tensor tgt = wb.raw_target_window(2);
  CHECK(tgt[0 * 3 + 0] == ds.at(0, 17, kInfected));

  // raw_targets equals denormalize(targets).
  for (std::size_t w = 0; w < wb.n_windows; ++w)
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t l = 0; l < 3; ++l) {
        const std::size_t idx = (w * 3 + p) * 3 + l;
        CHECK(norm.denormalize(p, kInfected, wb.targets[idx]) ==
              doctest::Approx(wb.raw_targets[idx]).epsilon(1e-9));
      }

  // No target day of a train window leaks past the range end.
  CHECK(wb.starts.back() + 5 + 3 <= 40);
}

TEST_CASE("save then load round trips exactly") {
  TempDir dir;
  auto ds = toy_dataset(4, 30);
  // Attach coordinates and an adjacency to exercise every file.
  std::vector<std::array<double, 2>> coords;
  for (std::size_t p = 0; p < 4; ++p)
    coords.push_back({30.0 + static_cast<double>(p), -100.0 - static_cast<double>(p)});
  ds.coordinates = coords;
  Tensor adj({4, 4});
  adj[0 * 4 + 1] = adj[1 * 4 + 0] = 1.0;
  adj[2 * 4 + 3] = adj[3 * 4 + 2] = 1.0;
  ds.geo_adjacency = adj;

  save_dataset(ds, dir.path.string());
  const EpidemicDataset back =
      load_dataset(dir / "series.csv", dir / "meta.csv", dir / "adjacency.csv");

  CHECK(back.patch_ids == ds.patch_ids);
  CHECK(back.first_day == ds.first_day);
  CHECK(back.n_days == ds.n_days);
  REQUIRE(back.series.size() == ds.series.size());
  for (std::size_t i = 0; i < ds.series.size(); ++i) CHECK(back.series[i] == ds.series[i]);
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(back.population[p] == ds.population[p]);
    CHECK((*back.coordinates)[p][0] == coords[p][0]);
    CHECK((*back.coordinates)[p][1] == coords[p][1]);
  }
  REQUIRE(back.geo_adjacency.has_value());
  for (std::size_t i = 0; i < 16; ++i) CHECK((*back.geo_adjacency)[i] == adj[i]);
}

TEST_CASE("loader rejects malformed input with located errors") {
  TempDir dir;
  write_file(dir / "meta.csv", kMeta2);

  SUBCASE("gap in dates names the missing date") {
    write_file(dir / "series.csv",
               "date,patch,susceptible,infected,recovered\n"
               "2024-01-01,a,990,10,0\n"
               "2024-01-01,b,1990,10,0\n"
               "2024-01-03,a,980,15,5\n"
               "2024-01-03,b,1980,15,5\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "series.csv", dir / "meta.csv"),
                         doctest::Contains("2024-01-02"), DataError);
  }
  SUBCASE("unknown patch") {
    write_file(dir / "series.csv",
               "date,patch,susceptible,infected,recovered\n"
               "2024-01-01,zz,990,10,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "series.csv", dir / "meta.csv"),
                         doctest::Contains("unknown patch"), DataError);
  }
  SUBCASE("negative count") {
    write_file(dir / "series.csv",
               "date,patch,susceptible,infected,recovered\n"
               "2024-01-01,a,990,-10,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "series.csv", dir / "meta.csv"),
                         doctest::Contains("negative"), DataError);
  }
  SUBCASE("non-numeric field includes file and line") {
    write_file(dir / "series.csv",
               "date,patch,susceptible,infected,recovered\n"
               "2024-01-01,a,990,ten,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "series.csv", dir / "meta.csv"),
                         doctest::Contains(":2"), DataError);
  }
  SUBCASE("duplicate patch-day row") {
    write_file(dir / "series.csv",
               "date,patch,susceptible,infected,recovered\n"
               "2024-01-01,a,990,10,0\n"
               "2024-01-01,a,990,10,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "series.csv", dir / "meta.csv"),
                         doctest::Contains("duplicate"), DataError);
  }
  SUBCASE("missing patch row on a day") {
    write_file(dir / "series.csv",
               "date,patch,susceptible,infected,recovered\n"
               "2024-01-01,a,990,10,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "series.csv", dir / "meta.csv"),
                         doctest::Contains("missing row"), DataError);
  }
  SUBCASE("bad series header") {
    write_file(dir / "series.csv", "date,patch,s,i,r\n");
    CHECK_THROWS_AS(load_dataset(dir / "series.csv", dir / "meta.csv"), DataError);
  }
  SUBCASE("bad meta header") {
    write_file(dir / "meta2.csv", "patch,pop\n");
    write_file(dir / "series.csv", "date,patch,susceptible,infected,recovered\n");
    CHECK_THROWS_AS(load_dataset(dir / "series.csv", dir / "meta2.csv"), DataError);
  }
  SUBCASE("self edge rejected") {
    write_file(dir / "series.csv",
               "date,patch,susceptible,infected,recovered\n"
               "2024-01-01,a,990,10,0\n"
               "2024-01-01,b,1990,10,0\n");
    write_file(dir / "adj.csv", "src,dst\na,a\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "series.csv", dir / "meta.csv", dir / "adj.csv"),
                         doctest::Contains("self edge"), DataError);
  }
  SUBCASE("missing files") {
    CHECK_THROWS_AS(load_dataset(dir / "nope.csv", dir / "meta.csv"), DataError);
    CHECK_THROWS_AS(load_dataset(dir / "nope.csv", dir / "nometa.csv"), DataError);
  }
}

TEST_CASE("meta without coordinates loads with no coordinate block") {
  TempDir dir;
  write_file(dir / "meta.csv",
             "patch,population,lat,lon\n"
             "a,1000,,\n"
             "b,2000,,\n");
  write_file(dir / "series.csv",
             "date,patch,susceptible,infected,recovered\n"
             "2024-01-01,a,990,10,0\n"
             "2024-01-01,b,1990,10,0\n");
  const EpidemicDataset ds = load_dataset(dir / "series.csv", dir / "meta.csv");
  CHECK_FALSE(ds.coordinates.has_value());
  CHECK(ds.n_days == 1);
}
