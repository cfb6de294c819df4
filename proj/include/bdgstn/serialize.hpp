#pragma once

#include <cstdint>
#include <string>

#include "bdgstn/data.hpp"
#include "bdgstn/model.hpp"

namespace bdgstn {

/// Everything needed to reload a trained model: parameters, the model
/// configuration, the fitted normalizer, and an optional static graph.
struct Checkpoint {
  BDGSTNParams params;
  ModelConfig config;
  Normalizer normalizer;
  Tensor static_graph;  // empty for learned graph modes
  std::uint64_t seed = 0;
};

/// FNV-1a over the canonical config text; stored in the manifest so a
/// loaded checkpoint can be checked against its recorded settings.
std::uint64_t config_hash(const ModelConfig& cfg);

/// Writes <dir>/params.bin (little-endian float64, concatenated in
/// manifest order) and <dir>/manifest.json.
void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace bdgstn
