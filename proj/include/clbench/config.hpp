#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "clbench/model.hpp"
#include "clbench/scenario.hpp"
#include "clbench/strategies.hpp"

namespace clbench {

struct ProbeConfig {
  bool ema_drift = false;
  int drift_batches = 100;
  bool export_activations = false;

  bool operator==(const ProbeConfig&) const = default;
};

/// Everything that determines an experiment. Text form is flat
/// `section.key = value` lines; see serialize_config for the full key list.
struct ExperimentConfig {
  StreamConfig stream;
  std::string stream_csv;  // when set, tasks are read from this CSV instead
  ModelConfig model;       // model.num_classes is taken from the stream
  StrategyConfig strategy;
  std::size_t buffer_capacity = 200;
  int epochs = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string output_dir;
  std::string name;  // display name; defaults to the method name
  ProbeConfig probe;
  bool save_checkpoint = false;
  int jobs = 1;  // seeds run concurrently; never changes results

  bool operator==(const ExperimentConfig&) const = default;

  std::string display_name() const;
  void validate() const;  // throws ConfigError
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Canonical text: every key, fixed order, doubles at 17 significant digits.
std::string serialize_config(const ExperimentConfig& config);

/// Sets one key from its text form, as it would appear in a config file.
void apply_override(ExperimentConfig& config, std::string_view key, std::string_view value);

/// 64-bit FNV-1a of the canonical serialization, excluding keys that do not
/// affect results (output directory, job count), as 16 hex digits.
std::string config_fingerprint(const ExperimentConfig& config);

/// Same, over the stream section only; paired comparisons require equality.
std::string stream_fingerprint(const ExperimentConfig& config);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace clbench
