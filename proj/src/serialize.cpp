#include "bdgstn/serialize.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bdgstn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

using nlohmann::json;

static std::string config_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "n_patches=" << c.n_patches << ";t_in=" << c.t_in << ";horizon=" << c.horizon
     << ";d_h=" << c.d_h << ";d_ada=" << c.d_ada << ";d_tcn=" << c.d_tcn
     << ";d_st=" << c.d_st << ";tcn_kernel=" << c.tcn_kernel
     << ";tcn_dilation=" << c.tcn_dilation << ";ma_kernel=" << c.ma_kernel
     << ";graph_mode=" << graph_mode_name(c.graph_mode)
     << ";ablation=" << ablation_name(c.ablation);
  return os.str();
}

std::uint64_t config_hash(const ModelConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : config_text(cfg)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

static json config_to_json(const ModelConfig& c) {
  return json{{"n_patches", c.n_patches},
              {"t_in", c.t_in},
              {"horizon", c.horizon},
              {"d_h", c.d_h},
              {"d_ada", c.d_ada},
              {"d_tcn", c.d_tcn},
              {"d_st", c.d_st},
              {"tcn_kernel", c.tcn_kernel},
              {"tcn_dilation", c.tcn_dilation},
              {"ma_kernel", c.ma_kernel},
              {"graph_mode", graph_mode_name(c.graph_mode)},
              {"ablation", ablation_name(c.ablation)}};
}

static ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_patches = j.at("n_patches").get<std::size_t>();
  c.t_in = j.at("t_in").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.d_h = j.at("d_h").get<std::size_t>();
  c.d_ada = j.at("d_ada").get<std::size_t>();
  c.d_tcn = j.at("d_tcn").get<std::size_t>();
  c.d_st = j.at("d_st").get<std::size_t>();
  c.tcn_kernel = j.at("tcn_kernel").get<std::size_t>();
  c.tcn_dilation = j.at("tcn_dilation").get<int>();
  c.ma_kernel = j.at("ma_kernel").get<std::size_t>();
  c.graph_mode = parse_graph_mode(j.at("graph_mode").get<std::string>());
  c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto named = ckpt.params.named();

  json manifest;
  manifest["dtype"] = "float64";
  manifest["seed"] = ckpt.seed;
  manifest["config"] = config_to_json(ckpt.config);
  manifest["config_hash"] = config_hash(ckpt.config);
  manifest["params"] = json::array();

  const std::string bin_path = dir + "/params.bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot open " + bin_path + " for writing");
  std::size_t offset = 0;
  for (const auto& [name, var] : named) {
    const Tensor& t = var->value;
    manifest["params"].push_back(
        json{{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
    offset += t.size() * sizeof(double);
  }
  if (!bin) throw DataError("write failed for " + bin_path);
  bin.close();

  manifest["normalizer"] = json{{"shape", ckpt.normalizer.min().shape()},
                                {"min", ckpt.normalizer.min().values()},
                                {"max", ckpt.normalizer.max().values()}};
  manifest["static_graph"] = json{{"shape", ckpt.static_graph.shape()},
                                  {"values", ckpt.static_graph.values()}};

  const std::string man_path = dir + "/manifest.json";
  std::ofstream man(man_path);
  if (!man) throw DataError("cannot open " + man_path + " for writing");
  man << manifest.dump(2) << '\n';
  if (!man) throw DataError("write failed for " + man_path);
}

Checkpoint load_checkpoint(const std::string& dir) {
  const std::string man_path = dir + "/manifest.json";
  std::ifstream man(man_path);
  if (!man) throw DataError("cannot open " + man_path);
  json manifest;
  try {
    man >> manifest;
  } catch (const json::exception& e) {
    throw DataError(man_path + ": " + e.what());
  }
  try {
    if (manifest.at("dtype").get<std::string>() != "float64")
      throw DataError(man_path + ": unsupported dtype");

    Checkpoint ckpt;
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.config = config_from_json(manifest.at("config"));
    if (manifest.at("config_hash").get<std::uint64_t>() != config_hash(ckpt.config))
      throw DataError(man_path + ": config hash mismatch");

    const auto& nj = manifest.at("normalizer");
    const Shape nshape = nj.at("shape").get<Shape>();
    ckpt.normalizer = Normalizer(Tensor(nshape, nj.at("min").get<std::vector<double>>()),
                                 Tensor(nshape, nj.at("max").get<std::vector<double>>()));
    const auto& sj = manifest.at("static_graph");
    const Shape sshape = sj.at("shape").get<Shape>();
    if (!sshape.empty())
      ckpt.static_graph = Tensor(sshape, sj.at("values").get<std::vector<double>>());

    ckpt.params = BDGSTNParams::init(ckpt.config, ckpt.seed);
    const std::string bin_path = dir + "/params.bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot open " + bin_path);
    for (const auto& [name, var] : ckpt.params.named()) {
      bool found = false;
      for (const auto& entry : manifest.at("params")) {
        if (entry.at("name").get<std::string>() != name) continue;
        found = true;
        Tensor& t = var->value;
        if (entry.at("shape").get<Shape>() != t.shape())
          throw DataError(man_path + ": shape mismatch for parameter " + name);
        bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>()));
        bin.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!bin) throw DataError(bin_path + ": truncated read for parameter " + name);
        break;
      }
      if (!found) throw DataError(man_path + ": missing parameter " + name);
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw DataError(man_path + ": " + e.what());
  }
}

}  // namespace bdgstn
