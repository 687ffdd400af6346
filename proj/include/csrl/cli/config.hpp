#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "csrl/train/trainer.hpp"
#include "csrl/verify/verify.hpp"

namespace csrl::cli {

// Minimal TOML-style reader: [section] headers, key = value lines, # comments.
// Values: quoted strings, integers, floats, booleans, one-line arrays.
// Returns an object of section objects. Throws std::runtime_error with the
// offending line on malformed input.
nlohmann::json parse_toml(const std::string& text);
nlohmann::json parse_toml_file(const std::string& path);

// Inverse of parse_toml for objects of scalar/array-valued sections.
std::string to_toml(const nlohmann::json& sections);

struct ExperimentConfig {
  train::TrainConfig train;
  verify::VerifyConfig ver;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "out";

  void validate() const;

  // Section/key mapping; unknown sections or keys are rejected. Omitted keys
  // keep the per-environment defaults.
  static ExperimentConfig from_sections(const nlohmann::json& sections);
  nlohmann::json to_sections() const;
};

ExperimentConfig load_config(const std::string& path);

// Stable digest of every training-relevant field; used to pair checkpoints
// with the config they were produced under.
std::string config_hash(const train::TrainConfig& cfg);

nlohmann::json train_config_to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace csrl::cli
