#pragma once

#include <filesystem>
#include <string>

#include "oodreg/mlp.hpp"

namespace oodreg {

inline constexpr int kModelFormatVersion = 1;

/// JSON document: {format_version, layer_dims, dropout_rate, weights, biases}.
/// Weights are nested row-major arrays (layer -> row -> value).
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace oodreg
