#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oodreg/trainer.hpp"

namespace oodreg {

inline constexpr const char* kToolVersion = "0.1.0";

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

struct RunManifest {
  std::string command;
  std::string config_json;  // snapshot; empty when the command takes no config
  std::uint64_t data_seed = 0;
  SeedPlan seeds;
  std::vector<std::filesystem::path> files;  // relative to the output directory
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
};

/// Writes out_dir/manifest.json listing every file with its size and hash.
/// This is the only output that carries timestamps.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& out_dir);

}  // namespace oodreg
