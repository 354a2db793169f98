#pragma once

#include <filesystem>
#include <string>

#include "aqi/featurize.hpp"
#include "aqi/network.hpp"
#include "aqi/pipeline.hpp"

namespace aqi {

struct Checkpoint {
  ModelConfig model_config;
  FeatureSchema schema;
  LabelScale label_scale;
  std::string config_hash;
  int fold = 0;
};

// <stem>.bin holds every parameter as little-endian float64, row-major, in
// manifest order. <stem>.manifest is text:
//   aqi-checkpoint 1
//   config_hash <hex>
//   fold <int>
//   label <mean> <scale>
//   model <key>=<value> ...
//   param <name> <rows> <cols>        (one per parameter)
// followed by the feature schema after a "schema" line.
void write_checkpoint(const std::filesystem::path& stem, const Mtstn& model, const Checkpoint& meta);

struct LoadedCheckpoint {
  Checkpoint meta;
  Mtstn model;
};

// Throws kMissingArtifact when either file is absent and kSchema when the
// manifest and binary disagree.
LoadedCheckpoint read_checkpoint(const std::filesystem::path& stem);

}  // namespace aqi
