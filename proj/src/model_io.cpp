#include "oodreg/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "oodreg/errors.hpp"

namespace oodreg {

using nlohmann::json;

std::string model_to_json(const MlpModel& model) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["layer_dims"] = model.layer_dims;
  doc["dropout_rate"] = model.dropout_rate;
  json weights = json::array();
  json biases = json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    json rows = json::array();
    const Matrix& w = model.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      rows.push_back(std::vector<double>(w.row(r).begin(), w.row(r).end()));
    }
    weights.push_back(std::move(rows));
    biases.push_back(std::vector<double>(model.biases[l].begin(), model.biases[l].end()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  return doc.dump(1) + "\n";
}

MlpModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("model file: parse error: ") + e.what());
  }
  MlpModel model;
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("model file: unsupported format_version " + std::to_string(version));
    }
    model.layer_dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
    model.dropout_rate = doc.at("dropout_rate").get<double>();
    const json& weights = doc.at("weights");
    const json& biases = doc.at("biases");
    if (!weights.is_array() || !biases.is_array()) {
      throw DataError("model file: weights and biases must be arrays");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto rows = weights[l].get<std::vector<std::vector<double>>>();
      const std::size_t cols = rows.empty() ? 0 : rows.front().size();
      Matrix w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) {
          throw DataError("model file: ragged weight matrix in layer " + std::to_string(l));
        }
        for (std::size_t c = 0; c < cols; ++c) {
          w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
      }
      model.weights.push_back(std::move(w));
    }
    for (const json& b : biases) {
      const auto values = b.get<std::vector<double>>();
      model.biases.push_back(Eigen::Map<const Vector>(values.data(),
                                                      static_cast<Eigen::Index>(values.size())));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path.string());
  out << model_to_json(model);
  if (!out) throw DataError("failed writing model file " + path.string());
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

}  // namespace oodreg
