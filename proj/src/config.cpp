#include "oodreg/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"
#include "oodreg/errors.hpp"

namespace oodreg {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: wrong type for '" + std::string(key) + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T value{};
  read(obj, key, value, where);
  out = value;
}

json seeds_json(const TrainConfig& t) {
  json s = json::object();
  if (t.init_seed) s["init"] = *t.init_seed;
  if (t.shuffle_seed) s["shuffle"] = *t.shuffle_seed;
  if (t.dropout_seed) s["dropout"] = *t.dropout_seed;
  if (t.mc_seed) s["mc"] = *t.mc_seed;
  return s;
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (train.layer_dims.front() != 2) throw ConfigError("config: the benchmark is 2-D, layer_dims[0] must be 2");
  if (train.layer_dims.back() != geometry.num_classes) {
    throw ConfigError("config: output width must equal geometry.num_classes");
  }
  if (!(geometry.id_sigma > 0.0) || !(geometry.ood_sigma > 0.0)) {
    throw ConfigError("config: geometry sigmas must be > 0");
  }
  for (int s : eval.severities) {
    if (s < 1 || s > 5) throw ConfigError("config: severities must lie in 1..5");
  }
  if (eval.corruptions && eval.severities.empty()) throw ConfigError("config: no severities");
  if (eval.grid_resolution < 2) throw ConfigError("config: grid_resolution must be >= 2");
  if (eval.histogram_bins < 1) throw ConfigError("config: histogram_bins must be >= 1");
}

RunConfig run_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  check_keys(doc, "config",
             {"config_version", "seed", "data_seed", "objective", "layer_dims", "epochs",
              "batch_size", "learning_rate", "momentum", "weight_decay", "dropout_rate",
              "ce_l1_strength", "mc_passes", "seeds", "objective_params", "geometry", "eval"});
  int version = 0;
  read(doc, "config_version", version, "config");
  if (version != kConfigVersion) {
    throw ConfigError("config: config_version must be " + std::to_string(kConfigVersion));
  }

  RunConfig c;
  TrainConfig& t = c.train;
  read(doc, "seed", t.seed, "config");
  c.data_seed = t.seed;
  read(doc, "data_seed", c.data_seed, "config");
  if (doc.contains("objective")) {
    std::string name;
    read(doc, "objective", name, "config");
    t.objective = objective_from_string(name);
  }
  read(doc, "layer_dims", t.layer_dims, "config");
  read(doc, "epochs", t.epochs, "config");
  read(doc, "batch_size", t.batch_size, "config");
  read(doc, "learning_rate", t.learning_rate, "config");
  read(doc, "momentum", t.momentum, "config");
  read(doc, "weight_decay", t.weight_decay, "config");
  read(doc, "dropout_rate", t.dropout_rate, "config");
  read(doc, "ce_l1_strength", t.ce_l1_strength, "config");
  read(doc, "mc_passes", t.mc_passes, "config");

  if (doc.contains("seeds")) {
    const json& s = doc.at("seeds");
    check_keys(s, "seeds", {"init", "shuffle", "dropout", "mc"});
    read_opt(s, "init", t.init_seed, "seeds");
    read_opt(s, "shuffle", t.shuffle_seed, "seeds");
    read_opt(s, "dropout", t.dropout_seed, "seeds");
    read_opt(s, "mc", t.mc_seed, "seeds");
  }
  if (doc.contains("objective_params")) {
    const json& p = doc.at("objective_params");
    check_keys(p, "objective_params", {"lambda", "gamma", "lambda1", "lambda2", "alpha", "k", "tau"});
    read(p, "lambda", t.params.lambda, "objective_params");
    read(p, "gamma", t.params.gamma, "objective_params");
    read(p, "lambda1", t.params.lambda1, "objective_params");
    read(p, "lambda2", t.params.lambda2, "objective_params");
    read(p, "alpha", t.params.alpha, "objective_params");
    read(p, "k", t.params.k, "objective_params");
    read(p, "tau", t.params.tau, "objective_params");
  }
  if (doc.contains("geometry")) {
    const json& g = doc.at("geometry");
    BenchmarkGeometry& geo = c.geometry;
    check_keys(g, "geometry",
               {"num_classes", "id_radius", "id_sigma", "id_points_per_class", "train_fraction",
                "val_fraction", "ood_components", "ood_radius", "ood_sigma", "ood_rotation_deg",
                "ood_points_per_component", "ood_train_fraction"});
    read(g, "num_classes", geo.num_classes, "geometry");
    read(g, "id_radius", geo.id_radius, "geometry");
    read(g, "id_sigma", geo.id_sigma, "geometry");
    read(g, "id_points_per_class", geo.id_points_per_class, "geometry");
    read(g, "train_fraction", geo.train_fraction, "geometry");
    read(g, "val_fraction", geo.val_fraction, "geometry");
    read(g, "ood_components", geo.ood_components, "geometry");
    read(g, "ood_radius", geo.ood_radius, "geometry");
    read(g, "ood_sigma", geo.ood_sigma, "geometry");
    read(g, "ood_rotation_deg", geo.ood_rotation_deg, "geometry");
    read(g, "ood_points_per_component", geo.ood_points_per_component, "geometry");
    read(g, "ood_train_fraction", geo.ood_train_fraction, "geometry");
  }
  if (doc.contains("eval")) {
    const json& e = doc.at("eval");
    check_keys(e, "eval",
               {"mahalanobis", "corruptions", "severities", "grid_resolution", "histogram_bins",
                "mc_passes"});
    read(e, "mahalanobis", c.eval.mahalanobis, "eval");
    read(e, "corruptions", c.eval.corruptions, "eval");
    read(e, "severities", c.eval.severities, "eval");
    read(e, "grid_resolution", c.eval.grid_resolution, "eval");
    read(e, "histogram_bins", c.eval.histogram_bins, "eval");
    read(e, "mc_passes", c.eval.mc_passes, "eval");
  }
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json doc;
  doc["config_version"] = kConfigVersion;
  doc["seed"] = t.seed;
  doc["data_seed"] = c.data_seed;
  doc["objective"] = to_string(t.objective);
  doc["layer_dims"] = t.layer_dims;
  doc["epochs"] = t.epochs;
  doc["batch_size"] = t.batch_size;
  doc["learning_rate"] = t.learning_rate;
  doc["momentum"] = t.momentum;
  doc["weight_decay"] = t.weight_decay;
  doc["dropout_rate"] = t.dropout_rate;
  doc["ce_l1_strength"] = t.ce_l1_strength;
  doc["mc_passes"] = t.mc_passes;
  doc["seeds"] = seeds_json(t);
  doc["objective_params"] = {{"lambda", t.params.lambda},   {"gamma", t.params.gamma},
                             {"lambda1", t.params.lambda1}, {"lambda2", t.params.lambda2},
                             {"alpha", t.params.alpha},     {"k", t.params.k},
                             {"tau", t.params.tau}};
  const BenchmarkGeometry& g = c.geometry;
  doc["geometry"] = {{"num_classes", g.num_classes},
                     {"id_radius", g.id_radius},
                     {"id_sigma", g.id_sigma},
                     {"id_points_per_class", g.id_points_per_class},
                     {"train_fraction", g.train_fraction},
                     {"val_fraction", g.val_fraction},
                     {"ood_components", g.ood_components},
                     {"ood_radius", g.ood_radius},
                     {"ood_sigma", g.ood_sigma},
                     {"ood_rotation_deg", g.ood_rotation_deg},
                     {"ood_points_per_component", g.ood_points_per_component},
                     {"ood_train_fraction", g.ood_train_fraction}};
  doc["eval"] = {{"mahalanobis", c.eval.mahalanobis},
                 {"corruptions", c.eval.corruptions},
                 {"severities", c.eval.severities},
                 {"grid_resolution", c.eval.grid_resolution},
                 {"histogram_bins", c.eval.histogram_bins},
                 {"mc_passes", c.eval.mc_passes}};
  return doc.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config file " + path.string());
  out << run_config_to_json(config);
}

std::vector<std::map<std::string, double>> grid_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("grid: parse error: ") + e.what());
  }
  if (!doc.is_array()) throw ConfigError("grid: expected a JSON list of override objects");
  std::vector<std::map<std::string, double>> grid;
  for (const json& point : doc) {
    if (!point.is_object()) throw ConfigError("grid: every entry must be an object");
    std::map<std::string, double> overrides;
    for (const auto& item : point.items()) {
      if (!item.value().is_number()) {
        throw ConfigError("grid: override '" + item.key() + "' must be a number");
      }
      overrides[item.key()] = item.value().get<double>();
    }
    grid.push_back(std::move(overrides));
  }
  if (grid.empty()) throw ConfigError("grid: empty grid");
  return grid;
}

std::vector<std::map<std::string, double>> load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read grid file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return grid_from_json(ss.str());
}

}  // namespace oodreg
