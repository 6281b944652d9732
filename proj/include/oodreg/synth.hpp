#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oodreg/mlp.hpp"

namespace oodreg {

struct GaussianSpec {
  std::array<double, 2> mean{};
  double sigma = 0.5;          // isotropic standard deviation
  std::optional<int> label;    // empty for OOD components
};

enum class SplitRole { train, val, test_id, test_ood, train_ood };

const char* to_string(SplitRole role);

/// Features plus labels. OOD splits carry no labels (labels is empty).
struct DatasetSplit {
  Matrix features;
  std::vector<int> labels;
  SplitRole role = SplitRole::train;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  bool labeled() const { return !labels.empty(); }
  void validate() const;
};

/// Each component contributes exactly n_per_component i.i.d. N(mean, sigma^2 I)
/// points, in component order. Labeled iff every component has a label.
DatasetSplit sample_mixture(const std::vector<GaussianSpec>& specs, std::size_t n_per_component,
                            std::uint64_t seed, SplitRole role = SplitRole::train);

struct BenchmarkGeometry {
  std::size_t num_classes = 3;
  double id_radius = 4.0;
  double id_sigma = 0.5;
  std::size_t id_points_per_class = 500;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  std::size_t ood_components = 4;
  double ood_radius = 7.0;
  double ood_sigma = 0.5;
  double ood_rotation_deg = 45.0;  // relative to the first ID vertex
  std::size_t ood_points_per_component = 500;
  double ood_train_fraction = 0.5;

  std::vector<GaussianSpec> id_components() const;
  std::vector<GaussianSpec> ood_components_specs() const;
};

struct Benchmark {
  DatasetSplit train;
  DatasetSplit val;
  DatasetSplit test_id;
  DatasetSplit test_ood;
  DatasetSplit train_ood;
};

/// ID: class c at angle 90 + 360 c / num_classes degrees on the ID circle.
/// OOD: components on the OOD circle, offset by ood_rotation_deg.
/// Splits are stratified per component and shuffled.
Benchmark make_default_benchmark(std::uint64_t seed, const BenchmarkGeometry& geometry = {});

enum class CorruptionKind { gaussian_noise, uniform_noise, translate, scale, rotate };

const char* to_string(CorruptionKind kind);
CorruptionKind corruption_kind_from_string(const std::string& name);
std::vector<CorruptionKind> all_corruption_kinds();

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 1;  // 1..5
};

/// Applies a 2-D corruption. Preserves N, d, labels and role.
DatasetSplit corrupt(const DatasetSplit& split, const CorruptionSpec& spec, std::uint64_t seed);

/// CSV with header x0,...,x{d-1},label. Unlabeled rows leave the label empty.
void write_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit read_split(const std::filesystem::path& path, SplitRole role);

/// <dir>/<role>.csv for all five roles.
void write_benchmark(const Benchmark& benchmark, const std::filesystem::path& dir);
/// Reads the splits present in dir. train, val, test_id and test_ood are
/// required; a missing train_ood.csv yields an empty train_ood split.
Benchmark read_benchmark(const std::filesystem::path& dir);

}  // namespace oodreg
