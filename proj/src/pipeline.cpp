#include "bdgstn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace bdgstn {

using nlohmann::json;

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for key '" + key + "': " + v);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad number for key '" + key + "': " + v);
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for key '" + key + "': " + v);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path + " for writing");
  return f;
}

void write_edge_csv(const std::string& path, const Tensor& w,
                    const std::vector<std::string>& ids) {
  const std::size_t n = ids.size();
  std::ofstream f = open_out(path);
  f << "src,dst,weight\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      f << ids[i] << ',' << ids[j] << ',' << g17(w[i * n + j]) << '\n';
  if (!f) throw DataError("write failed for " + path);
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  RunConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "train" && section != "simulate" &&
          section != "output")
        throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown section '" +
                          section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const std::string qual = section.empty() ? key : section + "." + key;

    if (section == "data") {
      if (key == "series")
        cfg.series_path = val;
      else if (key == "meta")
        cfg.meta_path = val;
      else if (key == "adjacency")
        cfg.adjacency_path = val;
      else
        throw ConfigError("unknown config key '" + qual + "'");
    } else if (section == "train") {
      if (key == "epochs")
        cfg.train.epochs = to_size(val, qual);
      else if (key == "learning_rate")
        cfg.train.learning_rate = to_double(val, qual);
      else if (key == "t_in")
        cfg.train.t_in = to_size(val, qual);
      else if (key == "horizon")
        cfg.train.horizon = to_size(val, qual);
      else if (key == "seed")
        cfg.train.seed = to_size(val, qual);
      else if (key == "graph_mode")
        cfg.train.graph_mode = parse_graph_mode(val);
      else if (key == "ablation")
        cfg.train.ablation = parse_ablation(val);
      else if (key == "batch_mode") {
        if (val == "per-window")
          cfg.train.batch_mode = BatchMode::per_window;
        else if (val == "full-batch")
          cfg.train.batch_mode = BatchMode::full_batch;
        else
          throw ConfigError("bad value for key '" + qual + "': " + val);
      } else
        throw ConfigError("unknown config key '" + qual + "'");
    } else if (section == "simulate") {
      if (key == "n_patches")
        cfg.sim.n_patches = to_size(val, qual);
      else if (key == "days")
        cfg.sim.days = to_size(val, qual);
      else if (key == "seed")
        cfg.sim.seed = to_size(val, qual);
      else if (key == "noise")
        cfg.sim.noise = to_bool(val, qual);
      else if (key == "noise_sigma")
        cfg.sim.noise_sigma = to_double(val, qual);
      else if (key == "identity_mobility")
        cfg.sim.identity_mobility = to_bool(val, qual);
      else if (key == "initial_infected_frac")
        cfg.sim.initial_infected_frac = to_double(val, qual);
      else if (key == "travel_frac")
        cfg.sim.travel_frac = to_double(val, qual);
      else if (key == "pop_min")
        cfg.sim.pop_min = to_double(val, qual);
      else if (key == "pop_max")
        cfg.sim.pop_max = to_double(val, qual);
      else if (key == "beta_min")
        cfg.sim.beta_min = to_double(val, qual);
      else if (key == "beta_max")
        cfg.sim.beta_max = to_double(val, qual);
      else if (key == "gamma_min")
        cfg.sim.gamma_min = to_double(val, qual);
      else if (key == "gamma_max")
        cfg.sim.gamma_max = to_double(val, qual);
      else
        throw ConfigError("unknown config key '" + qual + "'");
    } else if (section == "output") {
      if (key == "dir")
        cfg.out_dir = val;
      else if (key == "checkpoint")
        cfg.checkpoint_dir = val;
      else
        throw ConfigError("unknown config key '" + qual + "'");
    } else {
      throw ConfigError("unknown config key '" + qual + "' (keys must be in a section)");
    }
  }
  if (cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = cfg.out_dir + "/checkpoint";
  return cfg;
}

EpidemicDataset load_run_dataset(const RunConfig& cfg) {
  if (cfg.series_path.empty() || cfg.meta_path.empty())
    throw ConfigError("config must set data.series and data.meta");
  return load_dataset(cfg.series_path, cfg.meta_path, cfg.adjacency_path);
}

void run_simulate(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  save_dataset(simulate(cfg.sim), cfg.out_dir);
}

TrainResult run_train(const EpidemicDataset& ds, const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  TrainResult res = train(ds, cfg.train);

  Checkpoint ckpt;
  ckpt.params = res.params;
  ckpt.config = res.model_config;
  ckpt.normalizer = res.normalizer;
  ckpt.static_graph = res.static_graph;
  ckpt.seed = cfg.train.seed;
  save_checkpoint(ckpt, cfg.checkpoint_dir);

  std::ofstream h = open_out(cfg.out_dir + "/history.csv");
  h << "epoch,train_loss,val_mae,val_rmse,val_mape,val_pcc,val_ccc\n";
  for (std::size_t e = 0; e < res.history.size(); ++e) {
    const EpochRecord& r = res.history[e];
    h << e << ',' << g17(r.train_loss) << ',' << g17(r.val.mae) << ',' << g17(r.val.rmse)
      << ',' << g17(r.val.mape) << ',' << g17(r.val.pcc) << ',' << g17(r.val.ccc) << '\n';
  }
  if (!h) throw DataError("write failed for " + cfg.out_dir + "/history.csv");
  return res;
}

void write_metrics_json(const MetricsReport& m, const TrainConfig& cfg,
                        const std::string& path) {
  json j{{"mae", m.mae},
         {"rmse", m.rmse},
         {"mape", m.mape},
         {"pcc", m.pcc},
         {"ccc", m.ccc},
         {"mape_skipped_fraction", m.mape_skipped_fraction},
         {"degenerate", m.degenerate},
         {"config",
          {{"graph_mode", graph_mode_name(cfg.graph_mode)},
           {"ablation", ablation_name(cfg.ablation)},
           {"t_in", cfg.t_in},
           {"horizon", cfg.horizon},
           {"epochs", cfg.epochs},
           {"learning_rate", cfg.learning_rate},
           {"seed", cfg.seed}}}};
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw DataError("write failed for " + path);
}

MetricsReport run_eval(const EpidemicDataset& ds, const Checkpoint& ckpt,
                       const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const ModelConfig& mc = ckpt.config;
  const SplitRanges splits = chrono_split(ds, cfg.train.split_ratios, mc.t_in, mc.horizon);
  const WindowBatch test_w =
      make_windows(ds, ckpt.normalizer, splits.test, mc.t_in, mc.horizon);
  const Tensor* sg = ckpt.static_graph.empty() ? nullptr : &ckpt.static_graph;

  const Tensor pred =
      predict_windows(ckpt.params, test_w, ds.population, ckpt.normalizer, mc, sg);
  const MetricsReport m = compute_metrics(pred.values(), test_w.raw_targets.values());

  TrainConfig summary = cfg.train;
  summary.t_in = mc.t_in;
  summary.horizon = mc.horizon;
  summary.graph_mode = mc.graph_mode;
  summary.ablation = mc.ablation;
  write_metrics_json(m, summary, cfg.out_dir + "/metrics.json");

  std::ofstream f = open_out(cfg.out_dir + "/forecast.csv");
  f << "patch,horizon,predicted,actual\n";
  const std::size_t n = test_w.n_patches, l = test_w.horizon;
  for (std::size_t w = 0; w < test_w.n_windows; ++w)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t h = 0; h < l; ++h) {
        const std::size_t idx = (w * n + i) * l + h;
        f << ds.patch_ids[i] << ',' << h + 1 << ',' << g17(pred[idx]) << ','
          << g17(test_w.raw_targets[idx]) << '\n';
      }
  if (!f) throw DataError("write failed for " + cfg.out_dir + "/forecast.csv");
  return m;
}

void run_ablate(const EpidemicDataset& ds, const RunConfig& cfg) {
  struct Variant {
    std::string name;
    GraphMode mode;
    Ablation abl;
  };
  std::vector<Variant> variants;
  for (GraphMode m : {GraphMode::fused, GraphMode::backbone_only, GraphMode::temporal_only,
                      GraphMode::geography, GraphMode::gravity, GraphMode::dtw, GraphMode::pcc})
    variants.push_back({"graph-" + graph_mode_name(m), m, Ablation::none});
  for (Ablation a : {Ablation::temporal_only, Ablation::spatial_only, Ablation::no_loss,
                     Ablation::no_trend})
    variants.push_back({"ablate-" + ablation_name(a), GraphMode::fused, a});

  std::vector<std::string> dirs;
  for (const Variant& v : variants) {
    RunConfig vcfg = cfg;
    vcfg.train.graph_mode = v.mode;
    vcfg.train.ablation = v.abl;
    vcfg.out_dir = cfg.out_dir + "/" + v.name;
    vcfg.checkpoint_dir = vcfg.out_dir + "/checkpoint";
    run_train(ds, vcfg);
    const Checkpoint ckpt = load_checkpoint(vcfg.checkpoint_dir);
    run_eval(ds, ckpt, vcfg);
    dirs.push_back(vcfg.out_dir);
  }
  write_compare_table(dirs, cfg.out_dir + "/ablation.csv");
}

void run_graph_report(const EpidemicDataset& ds, const Checkpoint& ckpt,
                      const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const ModelConfig& mc = ckpt.config;
  const SplitRanges splits = chrono_split(ds, cfg.train.split_ratios, mc.t_in, mc.horizon);

  if (mc.graph_mode == GraphMode::fused) {
    const WindowBatch test_w =
        make_windows(ds, ckpt.normalizer, splits.test, mc.t_in, mc.horizon);
    ModelConfig fwd = mc;
    fwd.ablation = Ablation::no_loss;
    ForecastOutput fo =
        model_forward(ckpt.params, test_w.input_window(0), test_w.raw_last_window(0),
                      ds.population, ckpt.normalizer, fwd, nullptr);
    if (!fo.graphs) throw ContractError("graph report: fused forward returned no graphs");
    const std::size_t n = ds.n_patches(), t = mc.t_in, nn = n * n;
    write_edge_csv(cfg.out_dir + "/graph_backbone.csv", fo.graphs->back->value, ds.patch_ids);
    for (std::size_t step = 0; step < t; ++step) {
      Tensor slice({n, n});
      for (std::size_t e = 0; e < nn; ++e) {
        slice[e] = fo.graphs->temp->value[step * nn + e];
      }
      write_edge_csv(cfg.out_dir + "/graph_temporal_t" + std::to_string(step) + ".csv", slice,
                     ds.patch_ids);
      for (std::size_t e = 0; e < nn; ++e) slice[e] = fo.graphs->dyn->value[step * nn + e];
      write_edge_csv(cfg.out_dir + "/graph_dynamic_t" + std::to_string(step) + ".csv", slice,
                     ds.patch_ids);
    }
  } else if (!ckpt.static_graph.empty()) {
    write_edge_csv(cfg.out_dir + "/graph_" + graph_mode_name(mc.graph_mode) + ".csv",
                   ckpt.static_graph, ds.patch_ids);
  }

  // Static comparison graphs, whenever the dataset carries what they need.
  if (ds.geo_adjacency)
    write_edge_csv(cfg.out_dir + "/graph_geography.csv",
                   build_static_graph(ds, splits.train, GraphMode::geography), ds.patch_ids);
  if (ds.coordinates)
    write_edge_csv(cfg.out_dir + "/graph_gravity.csv",
                   build_static_graph(ds, splits.train, GraphMode::gravity), ds.patch_ids);
  write_edge_csv(cfg.out_dir + "/graph_dtw.csv",
                 build_static_graph(ds, splits.train, GraphMode::dtw), ds.patch_ids);
  write_edge_csv(cfg.out_dir + "/graph_pcc.csv",
                 build_static_graph(ds, splits.train, GraphMode::pcc), ds.patch_ids);
}

InfoReport run_info_report(const EpidemicDataset& ds, const Checkpoint& ckpt,
                           const RunConfig& cfg) {
  const ModelConfig& mc = ckpt.config;
  if (mc.graph_mode != GraphMode::fused)
    throw ConfigError("info report needs a checkpoint trained with graph_mode=fused");
  std::filesystem::create_directories(cfg.out_dir);
  const SplitRanges splits = chrono_split(ds, cfg.train.split_ratios, mc.t_in, mc.horizon);
  const WindowBatch test_w =
      make_windows(ds, ckpt.normalizer, splits.test, mc.t_in, mc.horizon);

  ModelConfig fwd = mc;
  fwd.ablation = Ablation::no_loss;
  std::vector<Tensor> backs, temps, dyns;
  for (std::size_t w = 0; w < test_w.n_windows; ++w) {
    ForecastOutput fo =
        model_forward(ckpt.params, test_w.input_window(w), test_w.raw_last_window(w),
                      ds.population, ckpt.normalizer, fwd, nullptr);
    if (!fo.graphs) throw ContractError("info report: fused forward returned no graphs");
    backs.push_back(fo.graphs->back->value);
    temps.push_back(fo.graphs->temp->value);
    dyns.push_back(fo.graphs->dyn->value);
  }
  const InfoReport rep =
      dynamic_graph_report(backs, temps, dyns, 2000, 50, 3, cfg.train.seed);

  json j{{"h_back", rep.h_back},
         {"h_time", rep.h_time},
         {"d_back", rep.d_back},
         {"d_time", rep.d_time},
         {"i_back", rep.i_back},
         {"i_time", rep.i_time},
         {"back_lower_entropy", rep.back_lower_entropy},
         {"back_lower_mi", rep.back_lower_mi},
         {"estimator", {{"bins", rep.bins}, {"k", rep.k}, {"mi_samples", rep.mi_samples}}}};
  std::ofstream f = open_out(cfg.out_dir + "/info_report.json");
  f << j.dump(2) << '\n';
  if (!f) throw DataError("write failed for " + cfg.out_dir + "/info_report.json");
  return rep;
}

void write_compare_table(const std::vector<std::string>& run_dirs,
                         const std::string& out_csv) {
  struct Row {
    std::string run;
    json j;
  };
  std::vector<Row> rows;
  for (const std::string& dir : run_dirs) {
    const std::string path = dir + "/metrics.json";
    std::ifstream f(path);
    if (!f) {
      std::cerr << "warning: skipping " << dir << ": no metrics.json\n";
      continue;
    }
    json j;
    try {
      f >> j;
      (void)j.at("mae").get<double>();
    } catch (const json::exception& e) {
      std::cerr << "warning: skipping " << dir << ": " << e.what() << '\n';
      continue;
    }
    rows.push_back({std::filesystem::path(dir).filename().string(), std::move(j)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.j.at("mae").get<double>() < b.j.at("mae").get<double>();
  });

  std::ofstream f = open_out(out_csv);
  f << "run,mae,rmse,mape,pcc,ccc,graph_mode,ablation,t_in,horizon,epochs,seed\n";
  for (const Row& r : rows) {
    const json& c = r.j.at("config");
    f << r.run << ',' << g17(r.j.at("mae").get<double>()) << ','
      << g17(r.j.at("rmse").get<double>()) << ',' << g17(r.j.at("mape").get<double>()) << ','
      << g17(r.j.at("pcc").get<double>()) << ',' << g17(r.j.at("ccc").get<double>()) << ','
      << c.at("graph_mode").get<std::string>() << ',' << c.at("ablation").get<std::string>()
      << ',' << c.at("t_in").get<std::size_t>() << ',' << c.at("horizon").get<std::size_t>()
      << ',' << c.at("epochs").get<std::size_t>() << ',' << c.at("seed").get<std::size_t>()
      << '\n';
  }
  if (!f) throw DataError("write failed for " + out_csv);
}

}  // namespace bdgstn
