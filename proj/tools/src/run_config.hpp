#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dcmd/inference.hpp"
#include "dcmd/pose_data.hpp"
#include "dcmd/scoring.hpp"
#include "dcmd/training.hpp"

namespace dcmd::app {

/// Everything a subcommand can be configured with, as one flat key space.
struct RunConfig {
  std::string dataset = "synthetic";
  std::string data;    // track directory
  std::string labels;  // labels CSV
  int stride = 1;
  int samples = 5;  // m
  SamplerInit sampler_init = SamplerInit::NoisedObservation;
  ModelConfig model;
  TrainConfig train;
  FuseOptions fuse;
  SynthConfig synth;

  void validate() const;
  /// Recomputes derived model sizes after keys change, then validates.
  void finalize();
};

enum class KeyType { Int, UInt, Double, Bool, String, IntList };

struct ConfigKey {
  std::string name;
  KeyType type;
  std::string help;
  std::function<std::string(const RunConfig&)> get;  // canonical text
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_keys();

/// "full" (full-size defaults) or "desk" (small model used by the synthetic recipe).
RunConfig preset(const std::string& name);

/// Applies a JSON object; unknown keys and bad values raise ConfigError naming the key.
void apply_json(RunConfig& cfg, const std::string& json_text);
/// Applies one key given as text.
void apply_value(RunConfig& cfg, const std::string& key, const std::string& value);

std::string to_json(const RunConfig& cfg);
/// Hex FNV-1a of the canonical JSON form.
std::string config_hash(const RunConfig& cfg);

}  // namespace dcmd::app
