#include "oodreg/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "oodreg/errors.hpp"
#include "oodreg/seeds.hpp"

namespace oodreg {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

bool is_ood_role(SplitRole role) {
  return role == SplitRole::test_ood || role == SplitRole::train_ood;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  std::shuffle(idx.begin(), idx.end(), gen);
  return idx;
}

DatasetSplit gather(const DatasetSplit& pool, const std::vector<std::size_t>& rows,
                    SplitRole role) {
  DatasetSplit out;
  out.role = role;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), pool.features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) =
        pool.features.row(static_cast<Eigen::Index>(rows[r]));
    if (pool.labeled() && !is_ood_role(role)) out.labels.push_back(pool.labels[rows[r]]);
  }
  return out;
}

// Splits a component-ordered pool into consecutive stratified chunks, then
// shuffles every chunk.
std::vector<DatasetSplit> stratified_split(const DatasetSplit& pool, std::size_t components,
                                           std::size_t per_component,
                                           const std::vector<std::size_t>& chunk_sizes,
                                           const std::vector<SplitRole>& roles,
                                           std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> chunks(chunk_sizes.size());
  for (std::size_t c = 0; c < components; ++c) {
    const auto order = shuffled_indices(per_component, derive_seed(seed, c, 0));
    std::size_t offset = 0;
    for (std::size_t k = 0; k < chunk_sizes.size(); ++k) {
      for (std::size_t i = 0; i < chunk_sizes[k]; ++i) {
        chunks[k].push_back(c * per_component + order[offset + i]);
      }
      offset += chunk_sizes[k];
    }
  }
  std::vector<DatasetSplit> out;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    const auto perm = shuffled_indices(chunks[k].size(), derive_seed(seed, 0x100 + k, 1));
    std::vector<std::size_t> rows;
    rows.reserve(perm.size());
    for (std::size_t p : perm) rows.push_back(chunks[k][p]);
    out.push_back(gather(pool, rows, roles[k]));
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace

const char* to_string(SplitRole role) {
  switch (role) {
    case SplitRole::train:
      return "train";
    case SplitRole::val:
      return "val";
    case SplitRole::test_id:
      return "test_id";
    case SplitRole::test_ood:
      return "test_ood";
    case SplitRole::train_ood:
      return "train_ood";
  }
  return "unknown";
}

void DatasetSplit::validate() const {
  if (features.rows() == 0) throw DataError(std::string(to_string(role)) + ": empty split");
  if (is_ood_role(role) && labeled()) {
    throw DataError(std::string(to_string(role)) + ": OOD split must be unlabeled");
  }
  if (!is_ood_role(role) && labels.size() != size()) {
    throw DataError(std::string(to_string(role)) + ": expected " + std::to_string(size()) +
                    " labels, got " + std::to_string(labels.size()));
  }
  if (!features.allFinite()) {
    throw DataError(std::string(to_string(role)) + ": non-finite feature value");
  }
}

DatasetSplit sample_mixture(const std::vector<GaussianSpec>& specs, std::size_t n_per_component,
                            std::uint64_t seed, SplitRole role) {
  if (specs.empty()) throw ConfigError("sample_mixture: no components");
  if (n_per_component == 0) throw ConfigError("sample_mixture: n_per_component must be > 0");
  const bool labeled = std::all_of(specs.begin(), specs.end(),
                                   [](const GaussianSpec& s) { return s.label.has_value(); });
  DatasetSplit split;
  split.role = role;
  split.features.resize(static_cast<Eigen::Index>(specs.size() * n_per_component), 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t c = 0; c < specs.size(); ++c) {
    const GaussianSpec& spec = specs[c];
    if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma)) {
      throw ConfigError("sample_mixture: sigma must be finite and > 0");
    }
    std::mt19937_64 gen(derive_seed(seed, seed_tag::kData, c));
    for (std::size_t i = 0; i < n_per_component; ++i) {
      const auto row = static_cast<Eigen::Index>(c * n_per_component + i);
      for (Eigen::Index d = 0; d < 2; ++d) {
        split.features(row, d) = spec.mean[static_cast<std::size_t>(d)] + spec.sigma * normal(gen);
      }
      if (labeled) split.labels.push_back(*spec.label);
    }
  }
  return split;
}

std::vector<GaussianSpec> BenchmarkGeometry::id_components() const {
  std::vector<GaussianSpec> specs;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = (90.0 + 360.0 * static_cast<double>(c) /
                                     static_cast<double>(num_classes)) * kDegToRad;
    specs.push_back({{id_radius * std::cos(angle), id_radius * std::sin(angle)},
                     id_sigma,
                     static_cast<int>(c)});
  }
  return specs;
}

std::vector<GaussianSpec> BenchmarkGeometry::ood_components_specs() const {
  std::vector<GaussianSpec> specs;
  for (std::size_t j = 0; j < ood_components; ++j) {
    const double angle = (90.0 + ood_rotation_deg +
                          360.0 * static_cast<double>(j) / static_cast<double>(ood_components)) *
                         kDegToRad;
    specs.push_back({{ood_radius * std::cos(angle), ood_radius * std::sin(angle)},
                     ood_sigma,
                     std::nullopt});
  }
  return specs;
}

Benchmark make_default_benchmark(std::uint64_t seed, const BenchmarkGeometry& geometry) {
  if (geometry.num_classes < 2 || geometry.ood_components < 1) {
    throw ConfigError("benchmark: need >= 2 classes and >= 1 OOD component");
  }
  const std::size_t per_class = geometry.id_points_per_class;
  const auto n_train =
      static_cast<std::size_t>(std::llround(geometry.train_fraction * static_cast<double>(per_class)));
  const auto n_val =
      static_cast<std::size_t>(std::llround(geometry.val_fraction * static_cast<double>(per_class)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= per_class) {
    throw ConfigError("benchmark: split fractions leave an empty train/val/test split");
  }
  const std::size_t per_ood = geometry.ood_points_per_component;
  const auto n_ood_train = static_cast<std::size_t>(
      std::llround(geometry.ood_train_fraction * static_cast<double>(per_ood)));
  if (n_ood_train == 0 || n_ood_train >= per_ood) {
    throw ConfigError("benchmark: OOD train fraction leaves an empty OOD split");
  }

  const DatasetSplit id_pool =
      sample_mixture(geometry.id_components(), per_class, derive_seed(seed, seed_tag::kData, 0));
  const DatasetSplit ood_pool = sample_mixture(geometry.ood_components_specs(), per_ood,
                                               derive_seed(seed, seed_tag::kData, 1));

  auto id_splits = stratified_split(id_pool, geometry.num_classes, per_class,
                                    {n_train, n_val, per_class - n_train - n_val},
                                    {SplitRole::train, SplitRole::val, SplitRole::test_id},
                                    derive_seed(seed, seed_tag::kShuffle, 0));
  auto ood_splits = stratified_split(ood_pool, geometry.ood_components, per_ood,
                                     {n_ood_train, per_ood - n_ood_train},
                                     {SplitRole::train_ood, SplitRole::test_ood},
                                     derive_seed(seed, seed_tag::kShuffle, 1));
  Benchmark b;
  b.train = std::move(id_splits[0]);
  b.val = std::move(id_splits[1]);
  b.test_id = std::move(id_splits[2]);
  b.train_ood = std::move(ood_splits[0]);
  b.test_ood = std::move(ood_splits[1]);
  return b;
}

const char* to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise:
      return "gaussian_noise";
    case CorruptionKind::uniform_noise:
      return "uniform_noise";
    case CorruptionKind::translate:
      return "translate";
    case CorruptionKind::scale:
      return "scale";
    case CorruptionKind::rotate:
      return "rotate";
  }
  return "unknown";
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
  for (CorruptionKind kind : all_corruption_kinds()) {
    if (name == to_string(kind)) return kind;
  }
  throw ConfigError("unsupported corruption kind '" + name + "'");
}

std::vector<CorruptionKind> all_corruption_kinds() {
  return {CorruptionKind::gaussian_noise, CorruptionKind::uniform_noise,
          CorruptionKind::translate, CorruptionKind::scale, CorruptionKind::rotate};
}

DatasetSplit corrupt(const DatasetSplit& split, const CorruptionSpec& spec, std::uint64_t seed) {
  if (spec.severity < 1 || spec.severity > 5) {
    throw ConfigError("corrupt: severity must lie in 1..5");
  }
  const double s = spec.severity;
  DatasetSplit out = split;
  Matrix& x = out.features;
  std::mt19937_64 gen(derive_seed(seed, seed_tag::kCorrupt, static_cast<std::uint64_t>(spec.kind)));
  const bool planar = spec.kind == CorruptionKind::translate || spec.kind == CorruptionKind::rotate;
  if (planar && x.cols() != 2) {
    throw ConfigError(std::string("corrupt: ") + to_string(spec.kind) + " needs 2-D features");
  }

  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      std::normal_distribution<double> noise(0.0, 0.1 * s);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += noise(gen);
      break;
    }
    case CorruptionKind::uniform_noise: {
      std::uniform_real_distribution<double> noise(-0.15 * s, 0.15 * s);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += noise(gen);
      break;
    }
    case CorruptionKind::translate: {
      std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * std::numbers::pi);
      const double angle = angle_dist(gen);
      x.col(0).array() += 0.2 * s * std::cos(angle);
      x.col(1).array() += 0.2 * s * std::sin(angle);
      break;
    }
    case CorruptionKind::scale:
      x *= 1.0 + 0.1 * s;
      break;
    case CorruptionKind::rotate: {
      const double angle = 5.0 * s * kDegToRad;
      const double c = std::cos(angle);
      const double sn = std::sin(angle);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double x0 = x(i, 0);
        const double x1 = x(i, 1);
        x(i, 0) = c * x0 - sn * x1;
        x(i, 1) = sn * x0 + c * x1;
      }
      break;
    }
  }
  return out;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write split file " + path.string());
  std::string text;
  for (Eigen::Index d = 0; d < split.features.cols(); ++d) {
    text += "x" + std::to_string(d) + ",";
  }
  text += "label\n";
  for (Eigen::Index i = 0; i < split.features.rows(); ++i) {
    for (Eigen::Index d = 0; d < split.features.cols(); ++d) {
      text += format_double(split.features(i, d));
      text += ',';
    }
    if (split.labeled()) text += std::to_string(split.labels[static_cast<std::size_t>(i)]);
    text += '\n';
  }
  out << text;
  if (!out) throw DataError("failed writing split file " + path.string());
}

DatasetSplit read_split(const std::filesystem::path& path, SplitRole role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read split file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const std::string where = path.string();

  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    lines.emplace_back(text.data() + start, end - start);
    start = end + 1;
  }
  if (lines.empty()) throw DataError(where + ": empty file");

  const auto header = split_commas(lines[0]);
  if (header.size() < 2 || header.back() != "label") {
    throw DataError(where + ": header must be x0,...,label");
  }
  const std::size_t dims = header.size() - 1;
  for (std::size_t d = 0; d < dims; ++d) {
    if (header[d] != "x" + std::to_string(d)) {
      throw DataError(where + ": unexpected header column '" + std::string(header[d]) + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t unlabeled = 0;
  std::size_t rows = 0;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto fields = split_commas(lines[ln]);
    if (fields.size() != dims + 1) {
      throw DataError(where + ":" + std::to_string(ln + 1) + ": expected " +
                      std::to_string(dims + 1) + " columns, got " +
                      std::to_string(fields.size()));
    }
    for (std::size_t d = 0; d < dims; ++d) {
      double v = 0.0;
      const auto* first = fields[d].data();
      const auto* last = first + fields[d].size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw DataError(where + ":" + std::to_string(ln + 1) + ": bad number '" +
                        std::string(fields[d]) + "'");
      }
      values.push_back(v);
    }
    const std::string_view label = fields[dims];
    if (label.empty()) {
      ++unlabeled;
    } else {
      int y = 0;
      const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), y);
      if (ec != std::errc() || ptr != label.data() + label.size() || y < 0) {
        throw DataError(where + ":" + std::to_string(ln + 1) + ": bad label '" +
                        std::string(label) + "'");
      }
      labels.push_back(y);
    }
    ++rows;
  }
  if (rows == 0) throw DataError(where + ": no data rows");
  if (unlabeled != 0 && unlabeled != rows) {
    throw DataError(where + ": mixes labeled and unlabeled rows");
  }

  DatasetSplit split;
  split.role = role;
  split.features = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(dims));
  split.labels = std::move(labels);
  try {
    split.validate();
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  }
  return split;
}

void write_benchmark(const Benchmark& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const DatasetSplit* s : {&b.train, &b.val, &b.test_id, &b.test_ood, &b.train_ood}) {
    write_split(*s, dir / (std::string(to_string(s->role)) + ".csv"));
  }
}

Benchmark read_benchmark(const std::filesystem::path& dir) {
  auto load = [&](SplitRole role) {
    const auto path = dir / (std::string(to_string(role)) + ".csv");
    if (!std::filesystem::exists(path)) {
      throw DataError("missing input: " + path.string() + " (" + to_string(role) + " split)");
    }
    return read_split(path, role);
  };
  Benchmark b;
  b.train = load(SplitRole::train);
  b.val = load(SplitRole::val);
  b.test_id = load(SplitRole::test_id);
  b.test_ood = load(SplitRole::test_ood);
  if (std::filesystem::exists(dir / "train_ood.csv")) {
    b.train_ood = load(SplitRole::train_ood);
  } else {
    b.train_ood.role = SplitRole::train_ood;
    b.train_ood.features = Matrix(0, b.train.features.cols());
  }
  return b;
}

}  // namespace oodreg
