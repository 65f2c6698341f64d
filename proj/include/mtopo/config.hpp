#pragma once

#include "mtopo/dataset.hpp"
#include "mtopo/metrics.hpp"
#include "mtopo/radar.hpp"
#include "mtopo/simulator.hpp"
#include "mtopo/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mtopo {

using nlohmann::json;

/// Settings for the auxiliary corpus and pretraining runs.
struct PretrainSettings {
  CorpusConfig corpus;
  int epochs = 20;
  double lr = 1e-3;
  Augmentation augment{true, true, true};
};

/// Settings for one reproduction sweep.
struct ReproSettings {
  std::vector<std::uint64_t> seeds = {1};
};

struct RunConfig {
  DatasetConfig dataset;
  WaveConfig oracle;
  ModelConfig model;
  TrainConfig training;
  PretrainSettings pretrain;
  EvalConfig eval;
  ReproSettings repro;
  std::uint64_t seed = 7;
  std::filesystem::path out = "out";
};

json to_json(const VariantParams& v);
json to_json(const DatasetConfig& c);
json to_json(const WaveConfig& c);
json to_json(const EmbedderConfig& c);
json to_json(const ModelConfig& c);
json to_json(const TrainConfig& c);
json to_json(const RunConfig& c);

// Parsers fill defaults for missing keys and throw Config on unknown keys or
// wrongly typed values.
VariantParams variant_params_from_json(const json& j);
DatasetConfig dataset_config_from_json(const json& j);
WaveConfig wave_config_from_json(const json& j);
EmbedderConfig embedder_config_from_json(const json& j);
ModelConfig model_config_from_json(const json& j);
TrainConfig train_config_from_json(const json& j);
RunConfig run_config_from_json(const json& j);

/// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a string.
void apply_override(json& doc, const std::string& assignment);

/// Reads a config file (or defaults when path is empty), applies overrides,
/// validates, and fills derived fields (dataset seed from the master seed,
/// model n_angles from the oracle).
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides);

}  // namespace mtopo
