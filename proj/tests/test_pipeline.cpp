#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "bdgstn/pipeline.hpp"

using namespace bdgstn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bdgstn_pipe_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const char* f) const { return (path / f).string(); }
};

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  f << body;
}

std::size_t count_lines(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(bool(f));
  std::size_t n = 0;
  std::string line;
  while (std::getline(f, line)) ++n;
  return n;
}

EpidemicDataset quick_dataset() {
  SimConfig sim;
  sim.n_patches = 4;
  sim.days = 60;
  sim.seed = 5;
  sim.initial_infected_frac = 0.01;
  return simulate(sim);
}

RunConfig quick_run(const TempDir& dir) {
  RunConfig cfg;
  cfg.out_dir = dir / "out";
  cfg.checkpoint_dir = cfg.out_dir + "/checkpoint";
  cfg.train.epochs = 2;
  cfg.train.t_in = 5;
  cfg.train.horizon = 3;
  cfg.train.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("parse_run_config reads a full ini file") {
  TempDir dir;
  write_file(dir / "run.ini",
             "# full example\n"
             "[data]\n"
             "series = data/series.csv  ; trailing comment\n"
             "meta = data/meta.csv\n"
             "adjacency = data/adjacency.csv\n"
             "\n"
             "[train]\n"
             "epochs = 12\n"
             "learning_rate = 0.002\n"
             "t_in = 6\n"
             "horizon = 4\n"
             "seed = 99\n"
             "graph_mode = dtw\n"
             "ablation = no-trend\n"
             "batch_mode = full-batch\n"
             "\n"
             "[simulate]\n"
             "n_patches = 7\n"
             "days = 50\n"
             "noise = false\n"
             "identity_mobility = yes\n"
             "\n"
             "[output]\n"
             "dir = results\n");
  RunConfig cfg = parse_run_config(dir / "run.ini");
  CHECK(cfg.series_path == "data/series.csv");
  CHECK(cfg.meta_path == "data/meta.csv");
  CHECK(cfg.adjacency_path == "data/adjacency.csv");
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.train.learning_rate == 0.002);
  CHECK(cfg.train.t_in == 6);
  CHECK(cfg.train.horizon == 4);
  CHECK(cfg.train.seed == 99);
  CHECK(cfg.train.graph_mode == GraphMode::dtw);
  CHECK(cfg.train.ablation == Ablation::no_trend);
  CHECK(cfg.train.batch_mode == BatchMode::full_batch);
  CHECK(cfg.sim.n_patches == 7);
  CHECK(cfg.sim.days == 50);
  CHECK_FALSE(cfg.sim.noise);
  CHECK(cfg.sim.identity_mobility);
  CHECK(cfg.out_dir == "results");
  CHECK(cfg.checkpoint_dir == "results/checkpoint");  // default under out dir

  write_file(dir / "ckpt.ini", "[output]\ndir = o\ncheckpoint = elsewhere\n");
  CHECK(parse_run_config(dir / "ckpt.ini").checkpoint_dir == "elsewhere");
}

TEST_CASE("parse_run_config rejects malformed input") {
  TempDir dir;
  CHECK_THROWS_AS(parse_run_config(dir / "missing.ini"), ConfigError);

  write_file(dir / "a.ini", "[train]\nbogus = 1\n");
  CHECK_THROWS_WITH_AS(parse_run_config(dir / "a.ini"),
                       doctest::Contains("unknown config key 'train.bogus'"), ConfigError);

  write_file(dir / "b.ini", "[nope]\nx = 1\n");
  CHECK_THROWS_WITH_AS(parse_run_config(dir / "b.ini"), doctest::Contains("unknown section"),
                       ConfigError);

  write_file(dir / "c.ini", "[train]\nepochs = three\n");
  CHECK_THROWS_WITH_AS(parse_run_config(dir / "c.ini"), doctest::Contains("bad integer"),
                       ConfigError);

  write_file(dir / "d.ini", "epochs = 3\n");
  CHECK_THROWS_WITH_AS(parse_run_config(dir / "d.ini"),
                       doctest::Contains("must be in a section"), ConfigError);

  write_file(dir / "e.ini", "[train]\nepochs\n");
  CHECK_THROWS_WITH_AS(parse_run_config(dir / "e.ini"), doctest::Contains("key=value"),
                       ConfigError);

  write_file(dir / "f.ini", "[train\nepochs = 3\n");
  CHECK_THROWS_WITH_AS(parse_run_config(dir / "f.ini"), doctest::Contains("malformed section"),
                       ConfigError);

  write_file(dir / "g.ini", "[simulate]\nnoise = maybe\n");
  CHECK_THROWS_WITH_AS(parse_run_config(dir / "g.ini"), doctest::Contains("bad boolean"),
                       ConfigError);
}

TEST_CASE("run_simulate writes a loadable dataset") {
  TempDir dir;
  RunConfig cfg;
  cfg.out_dir = dir / "sim";
  cfg.sim.n_patches = 3;
  cfg.sim.days = 20;
  run_simulate(cfg);

  RunConfig load = cfg;
  load.series_path = cfg.out_dir + "/series.csv";
  load.meta_path = cfg.out_dir + "/meta.csv";
  load.adjacency_path = cfg.out_dir + "/adjacency.csv";
  const EpidemicDataset ds = load_run_dataset(load);
  CHECK(ds.n_patches() == 3);
  CHECK(ds.n_days == 20);
  CHECK(ds.geo_adjacency.has_value());

  RunConfig empty;
  CHECK_THROWS_AS(load_run_dataset(empty), ConfigError);
}

TEST_CASE("run_train writes history and a checkpoint that round trips") {
  TempDir dir;
  const EpidemicDataset ds = quick_dataset();
  RunConfig cfg = quick_run(dir);
  const TrainResult res = run_train(ds, cfg);

  // Header plus one row per epoch.
  CHECK(count_lines(cfg.out_dir + "/history.csv") == cfg.train.epochs + 1);

  const Checkpoint back = load_checkpoint(cfg.checkpoint_dir);
  CHECK(back.seed == cfg.train.seed);
  CHECK(back.config.n_patches == ds.n_patches());
  CHECK(back.config.graph_mode == GraphMode::fused);
  auto orig = res.params.named(), loaded = back.params.named();
  REQUIRE(orig.size() == loaded.size());
  for (std::size_t p = 0; p < orig.size(); ++p) {
    const Tensor &a = orig[p].second->value, &b = loaded[p].second->value;
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  for (std::size_t i = 0; i < back.normalizer.min().size(); ++i) {
    CHECK(back.normalizer.min()[i] == res.normalizer.min()[i]);
    CHECK(back.normalizer.max()[i] == res.normalizer.max()[i]);
  }
}

TEST_CASE("checkpoint loader rejects tampered artifacts") {
  TempDir dir;
  const EpidemicDataset ds = quick_dataset();
  RunConfig cfg = quick_run(dir);
  run_train(ds, cfg);

  SUBCASE("truncated params.bin") {
    fs::resize_file(cfg.checkpoint_dir + "/params.bin", 64);
    CHECK_THROWS_WITH_AS(load_checkpoint(cfg.checkpoint_dir), doctest::Contains("truncated"),
                         DataError);
  }
  SUBCASE("config edited without updating the hash") {
    const std::string man_path = cfg.checkpoint_dir + "/manifest.json";
    json man;
    std::ifstream(man_path) >> man;
    man["config"]["d_h"] = man["config"]["d_h"].get<std::size_t>() + 1;
    std::ofstream(man_path) << man.dump(2);
    CHECK_THROWS_WITH_AS(load_checkpoint(cfg.checkpoint_dir),
                         doctest::Contains("config hash mismatch"), DataError);
  }
  SUBCASE("missing parameter entry") {
    const std::string man_path = cfg.checkpoint_dir + "/manifest.json";
    json man;
    std::ifstream(man_path) >> man;
    man["params"].erase(0);
    std::ofstream(man_path) << man.dump(2);
    CHECK_THROWS_WITH_AS(load_checkpoint(cfg.checkpoint_dir),
                         doctest::Contains("missing parameter"), DataError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_checkpoint(dir / "nowhere"), DataError);
  }
}

TEST_CASE("run_eval writes metrics.json and forecast.csv") {
  TempDir dir;
  const EpidemicDataset ds = quick_dataset();
  RunConfig cfg = quick_run(dir);
  run_train(ds, cfg);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_dir);
  const MetricsReport m = run_eval(ds, ckpt, cfg);

  json j;
  std::ifstream(cfg.out_dir + "/metrics.json") >> j;
  CHECK(j.at("mae").get<double>() == m.mae);
  CHECK(j.at("rmse").get<double>() == m.rmse);
  CHECK(j.at("mape").get<double>() == m.mape);
  CHECK(j.at("pcc").get<double>() == m.pcc);
  CHECK(j.at("ccc").get<double>() == m.ccc);
  CHECK(j.at("config").at("graph_mode").get<std::string>() == "fused");
  CHECK(j.at("config").at("seed").get<std::size_t>() == cfg.train.seed);

  const SplitRanges splits = chrono_split(ds, cfg.train.split_ratios, cfg.train.t_in,
                                          cfg.train.horizon);
  const WindowBatch test_w =
      make_windows(ds, ckpt.normalizer, splits.test, cfg.train.t_in, cfg.train.horizon);
  CHECK(count_lines(cfg.out_dir + "/forecast.csv") ==
        1 + test_w.n_windows * test_w.n_patches * test_w.horizon);
}

TEST_CASE("write_compare_table sorts by mae and skips broken runs") {
  TempDir dir;
  MetricsReport m;
  TrainConfig tc;

  fs::create_directories(dir / "slow");
  m.mae = 5.0;
  tc.graph_mode = GraphMode::pcc;
  write_metrics_json(m, tc, std::string(dir / "slow") + "/metrics.json");

  fs::create_directories(dir / "fast");
  m.mae = 1.5;
  tc.graph_mode = GraphMode::fused;
  write_metrics_json(m, tc, std::string(dir / "fast") + "/metrics.json");

  fs::create_directories(dir / "broken");
  write_file(std::string(dir / "broken") + "/metrics.json", "{not json");

  const std::string out = dir / "table.csv";
  write_compare_table({dir / "slow", dir / "fast", dir / "missing", dir / "broken"}, out);

  std::ifstream f(out);
  std::string header, first, second, extra;
  REQUIRE(bool(std::getline(f, header)));
  CHECK(header == "run,mae,rmse,mape,pcc,ccc,graph_mode,ablation,t_in,horizon,epochs,seed");
  REQUIRE(bool(std::getline(f, first)));
  REQUIRE(bool(std::getline(f, second)));
  CHECK_FALSE(bool(std::getline(f, extra)));
  CHECK(first.substr(0, 5) == "fast,");
  CHECK(second.substr(0, 5) == "slow,");
  CHECK(first.find(",fused,") != std::string::npos);

  // No valid runs at all: just the header.
  write_compare_table({dir / "missing"}, out);
  CHECK(count_lines(out) == 1);
}

TEST_CASE("graph and info reports for a fused checkpoint") {
  TempDir dir;
  const EpidemicDataset ds = quick_dataset();
  RunConfig cfg = quick_run(dir);
  cfg.train.epochs = 1;
  run_train(ds, cfg);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_dir);

  run_graph_report(ds, ckpt, cfg);
  const std::size_t edges = ds.n_patches() * ds.n_patches();
  CHECK(count_lines(cfg.out_dir + "/graph_backbone.csv") == edges + 1);
  for (std::size_t t = 0; t < cfg.train.t_in; ++t) {
    CHECK(count_lines(cfg.out_dir + "/graph_temporal_t" + std::to_string(t) + ".csv") ==
          edges + 1);
    CHECK(count_lines(cfg.out_dir + "/graph_dynamic_t" + std::to_string(t) + ".csv") ==
          edges + 1);
  }
  // The simulated dataset has coordinates and an adjacency, so every static
  // comparison graph is emitted too.
  for (const char* name : {"geography", "gravity", "dtw", "pcc"})
    CHECK(count_lines(cfg.out_dir + "/graph_" + std::string(name) + ".csv") == edges + 1);

  const InfoReport rep = run_info_report(ds, ckpt, cfg);
  json j;
  std::ifstream(cfg.out_dir + "/info_report.json") >> j;
  CHECK(j.at("h_back").get<double>() == rep.h_back);
  CHECK(j.at("h_time").get<double>() == rep.h_time);
  CHECK(j.at("i_back").get<double>() == rep.i_back);
  CHECK(j.at("i_time").get<double>() == rep.i_time);
  CHECK(j.at("back_lower_entropy").get<bool>() == rep.back_lower_entropy);
  CHECK(j.at("back_lower_mi").get<bool>() == rep.back_lower_mi);
  CHECK(j.at("estimator").at("k").get<int>() == 3);
  CHECK(j.at("estimator").at("bins").get<int>() == 50);
  CHECK(rep.mi_samples > 0);

  // A static-graph checkpoint writes its own graph file but cannot feed the
  // info report.
  RunConfig scfg = quick_run(dir);
  scfg.out_dir = dir / "static_out";
  scfg.checkpoint_dir = scfg.out_dir + "/checkpoint";
  scfg.train.epochs = 1;
  scfg.train.graph_mode = GraphMode::pcc;
  run_train(ds, scfg);
  const Checkpoint sckpt = load_checkpoint(scfg.checkpoint_dir);
  CHECK_FALSE(sckpt.static_graph.empty());
  run_graph_report(ds, sckpt, scfg);
  CHECK(count_lines(scfg.out_dir + "/graph_pcc.csv") == edges + 1);
  CHECK_THROWS_AS(run_info_report(ds, sckpt, scfg), ConfigError);
}
