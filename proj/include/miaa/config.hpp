#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaa/aam.hpp"
#include "miaa/avito.hpp"
#include "miaa/dsm.hpp"
#include "miaa/epm.hpp"
#include "miaa/simgen.hpp"

#include "json.hpp"

namespace miaa::config {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "avito"
  std::string avito_path;
  int train_requests = 2000;
  int test_requests = 500;
};

struct EvalConfig {
  int audit_grid = 15;    // light IC sweep inside `evaluate`
  int audit_sample = 200;
  int ic_grid = 50;       // full sweep for `audit`
};

struct ExperimentConfig {
  simgen::MarketConfig market;
  DataConfig data;
  epm::EpmConfig epm;
  epm::PointwiseConfig pointwise;
  epm::TrainConfig epm_train;
  aam::MechanismConfig mechanism;
  dsm::MechTrainConfig mech_train;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // Keeps model dimensions consistent with the market's feature space.
  void harmonize();
  void validate() const;
};

ExperimentConfig default_config();
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig from_json(const nlohmann::json& j);

// Parses the file; parse errors carry line and column numbers.
ExperimentConfig load_config(const std::string& path);

std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace miaa::config
