// Command-line front end: simulate / train / eval / ablate /
// graph-report / info-report / compare.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bdgstn/pipeline.hpp"

namespace {

bdgstn::RunConfig load_config(const std::string& path) {
  bdgstn::RunConfig cfg = bdgstn::parse_run_config(path);
  if (const char* env = std::getenv("BDGSTN_OUT"); env && *env) {
    cfg.out_dir = env;
    cfg.checkpoint_dir = cfg.out_dir + "/checkpoint";
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bdgstn: epidemic forecasting with backbone-based dynamic graphs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string compare_out = "comparison.csv";
  std::vector<std::string> compare_dirs;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  auto* tr = app.add_subcommand("train", "train a model, write checkpoint + history");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* ab = app.add_subcommand("ablate", "train/evaluate all graph modes and ablations");
  auto* gr = app.add_subcommand("graph-report", "export graph weights as CSV");
  auto* ir = app.add_subcommand("info-report", "entropy/variance/MI graph diagnostics");
  for (CLI::App* sub : {sim, tr, ev, ab, gr, ir})
    sub->add_option("-c,--config", config_path, "run config file (INI)")->required();

  auto* cmp = app.add_subcommand("compare", "merge metrics.json files into one table");
  cmp->add_option("dirs", compare_dirs, "run directories holding metrics.json");
  cmp->add_option("-o,--out", compare_out, "output CSV path");

  try {
    app.parse(argc, argv);

    if (cmp->parsed()) {
      bdgstn::write_compare_table(compare_dirs, compare_out);
      return 0;
    }

    const bdgstn::RunConfig cfg = load_config(config_path);
    if (sim->parsed()) {
      bdgstn::run_simulate(cfg);
      return 0;
    }

    const bdgstn::EpidemicDataset ds = bdgstn::load_run_dataset(cfg);
    if (tr->parsed()) {
      bdgstn::run_train(ds, cfg);
    } else if (ab->parsed()) {
      bdgstn::run_ablate(ds, cfg);
    } else {
      const bdgstn::Checkpoint ckpt = bdgstn::load_checkpoint(cfg.checkpoint_dir);
      if (ev->parsed())
        bdgstn::run_eval(ds, ckpt, cfg);
      else if (gr->parsed())
        bdgstn::run_graph_report(ds, ckpt, cfg);
      else if (ir->parsed())
        bdgstn::run_info_report(ds, ckpt, cfg);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const bdgstn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const bdgstn::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
