#pragma once

#include <string>
#include <vector>

#include "bdgstn/metrics.hpp"
#include "bdgstn/serialize.hpp"
#include "bdgstn/simulator.hpp"
#include "bdgstn/training.hpp"

namespace bdgstn {

/// One run's settings, read from an INI-style config file with [data],
/// [train], [simulate] and [output] sections. Unknown sections or keys
/// are rejected.
struct RunConfig {
  std::string series_path, meta_path, adjacency_path;
  TrainConfig train;
  SimConfig sim;
  std::string out_dir = "out";
  std::string checkpoint_dir;  // defaults to <out_dir>/checkpoint
};

RunConfig parse_run_config(const std::string& path);

EpidemicDataset load_run_dataset(const RunConfig& cfg);

/// simulate -> series.csv / meta.csv / adjacency.csv under out_dir.
void run_simulate(const RunConfig& cfg);

/// train -> checkpoint/ + history.csv under out_dir.
TrainResult run_train(const EpidemicDataset& ds, const RunConfig& cfg);

/// eval on the test split -> metrics.json + forecast.csv under out_dir.
MetricsReport run_eval(const EpidemicDataset& ds, const Checkpoint& ckpt,
                       const RunConfig& cfg);

/// All 7 graph modes plus the 4 model ablations (11 variants), each
/// trained and evaluated; per-variant metrics.json and a combined
/// ablation.csv sorted by test MAE.
void run_ablate(const EpidemicDataset& ds, const RunConfig& cfg);

/// Learned backbone/temporal/dynamic graphs of the first test window as
/// src,dst,weight CSVs, plus every static graph the dataset supports.
void run_graph_report(const EpidemicDataset& ds, const Checkpoint& ckpt,
                      const RunConfig& cfg);

/// Entropy/variance/MI diagnostics over all test windows -> info_report.json.
InfoReport run_info_report(const EpidemicDataset& ds, const Checkpoint& ckpt,
                           const RunConfig& cfg);

/// One row per run dir holding a metrics.json, sorted by MAE; missing
/// files are skipped with a warning on stderr.
void write_compare_table(const std::vector<std::string>& run_dirs,
                         const std::string& out_csv);

void write_metrics_json(const MetricsReport& m, const TrainConfig& cfg,
                        const std::string& path);

}  // namespace bdgstn
