#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "oodreg/synth.hpp"
#include "oodreg/trainer.hpp"

namespace oodreg {

inline constexpr int kConfigVersion = 1;

struct EvalOptions {
  bool mahalanobis = true;
  bool corruptions = false;
  std::vector<int> severities{1, 2, 3, 4, 5};
  std::size_t grid_resolution = 200;
  std::size_t histogram_bins = 50;
  // MC passes at evaluation time; TrainConfig::mc_passes when 0.
  std::size_t mc_passes = 0;
};

/// One run: training hyperparameters, benchmark geometry, data seed and
/// evaluation options. Serialised as a versioned JSON document with strict keys.
struct RunConfig {
  TrainConfig train;
  BenchmarkGeometry geometry;
  std::uint64_t data_seed = 0;
  EvalOptions eval;

  void validate() const;
};

/// Throws ConfigError on unknown keys, wrong types or a bad version.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& config);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

/// A JSON list of objects mapping override keys to numbers.
std::vector<std::map<std::string, double>> load_grid(const std::filesystem::path& path);
std::vector<std::map<std::string, double>> grid_from_json(const std::string& text);

}  // namespace oodreg
