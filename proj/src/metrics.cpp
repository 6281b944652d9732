#include "oodreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

#include "oodreg/errors.hpp"
#include "oodreg/scores.hpp"

namespace oodreg {
namespace {

std::string fmt17(double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace

Orientation flipped(Orientation orientation) {
  return orientation == Orientation::higher_is_id ? Orientation::higher_is_ood
                                                  : Orientation::higher_is_id;
}

double auc_roc(std::span<const double> id_scores, std::span<const double> ood_scores,
               Orientation orientation) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw ConfigError("auc_roc: both score lists must be nonempty");
  }
  // Normalise so that larger means "more OOD"; negation is exact.
  const double sign = orientation == Orientation::higher_is_ood ? 1.0 : -1.0;
  struct Entry {
    double score;
    bool ood;
  };
  std::vector<Entry> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) all.push_back({sign * s, false});
  for (double s : ood_scores) all.push_back({sign * s, true});
  for (const Entry& e : all) {
    if (std::isnan(e.score)) throw ConfigError("auc_roc: NaN score");
  }
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Twice the rank sum of the OOD entries, so tied average ranks stay integral.
  std::uint64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    // Ranks i+1 .. j share the average (i + 1 + j) / 2.
    const std::uint64_t twice_avg = static_cast<std::uint64_t>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m) {
      if (all[m].ood) twice_rank_sum += twice_avg;
    }
    i = j;
  }
  const auto n_ood = static_cast<std::uint64_t>(ood_scores.size());
  const auto n_id = static_cast<std::uint64_t>(id_scores.size());
  const std::uint64_t twice_u = twice_rank_sum - n_ood * (n_ood + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_ood) * static_cast<double>(n_id));
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw_shape_error("accuracy: prediction count", labels.size(), predictions.size());
  }
  if (labels.empty()) throw ConfigError("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

void CorruptionTable::set(const std::string& kind, int severity, double error) {
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) kinds.push_back(kind);
  if (std::find(severities.begin(), severities.end(), severity) == severities.end()) {
    severities.push_back(severity);
    std::sort(severities.begin(), severities.end());
  }
  error_percent[kind][severity] = error;
}

double mce(const CorruptionTable& table) {
  if (table.kinds.empty() || table.severities.empty()) {
    throw ConfigError("mce: table declares no kinds or severities");
  }
  double total = 0.0;
  for (const std::string& kind : table.kinds) {
    const auto row = table.error_percent.find(kind);
    double sum = 0.0;
    for (int severity : table.severities) {
      if (row == table.error_percent.end() || !row->second.contains(severity)) {
        throw ConfigError("mce: missing cell (" + kind + ", severity " +
                          std::to_string(severity) + ")");
      }
      sum += row->second.at(severity);
    }
    total += sum / static_cast<double>(table.severities.size());
  }
  return total;
}

GridBounds padded_bounds(const Matrix& points, double pad_fraction) {
  if (points.rows() == 0 || points.cols() != 2) {
    throw ConfigError("padded_bounds: need a nonempty N x 2 point set");
  }
  GridBounds b;
  b.x0_min = points.col(0).minCoeff();
  b.x0_max = points.col(0).maxCoeff();
  b.x1_min = points.col(1).minCoeff();
  b.x1_max = points.col(1).maxCoeff();
  const double pad0 = std::max(b.x0_max - b.x0_min, 1e-9) * pad_fraction;
  const double pad1 = std::max(b.x1_max - b.x1_min, 1e-9) * pad_fraction;
  b.x0_min -= pad0;
  b.x0_max += pad0;
  b.x1_min -= pad1;
  b.x1_max += pad1;
  return b;
}

GridQuantity grid_quantity_from_string(const std::string& name) {
  if (name == "predicted_class") return GridQuantity::predicted_class;
  if (name == "confidence") return GridQuantity::confidence;
  if (name == "entropy") return GridQuantity::entropy;
  throw ConfigError("unknown grid quantity '" + name + "'");
}

const char* to_string(GridQuantity quantity) {
  switch (quantity) {
    case GridQuantity::predicted_class:
      return "predicted_class";
    case GridQuantity::confidence:
      return "confidence";
    case GridQuantity::entropy:
      return "entropy";
  }
  return "unknown";
}

DecisionGrid compute_decision_grid(const MlpModel& model, const GridBounds& bounds,
                                   std::size_t resolution, GridQuantity quantity) {
  if (model.input_dim() != 2) throw ConfigError("decision grid: model input must be 2-D");
  if (resolution < 2) throw ConfigError("decision grid: resolution must be >= 2");
  const std::size_t n = resolution * resolution;
  Matrix points(static_cast<Eigen::Index>(n), 2);
  DecisionGrid grid;
  grid.x0.reserve(n);
  grid.x1.reserve(n);
  const double step0 = (bounds.x0_max - bounds.x0_min) / static_cast<double>(resolution - 1);
  const double step1 = (bounds.x1_max - bounds.x1_min) / static_cast<double>(resolution - 1);
  for (std::size_t j = 0; j < resolution; ++j) {
    for (std::size_t i = 0; i < resolution; ++i) {
      const double x0 = bounds.x0_min + static_cast<double>(i) * step0;
      const double x1 = bounds.x1_min + static_cast<double>(j) * step1;
      const auto row = static_cast<Eigen::Index>(j * resolution + i);
      points(row, 0) = x0;
      points(row, 1) = x1;
      grid.x0.push_back(x0);
      grid.x1.push_back(x1);
    }
  }
  const PredictiveSamples samples = single_pass_predict(model, points);
  switch (quantity) {
    case GridQuantity::predicted_class: {
      const auto cls = argmax_rows(samples.probs.front());
      grid.value.assign(cls.begin(), cls.end());
      break;
    }
    case GridQuantity::confidence:
      grid.value = confidence_score(samples);
      break;
    case GridQuantity::entropy:
      grid.value = entropy_score(samples);
      break;
  }
  return grid;
}

void export_decision_grid(const MlpModel& model, const GridBounds& bounds, std::size_t resolution,
                          GridQuantity quantity, const std::filesystem::path& path) {
  const DecisionGrid grid = compute_decision_grid(model, bounds, resolution, quantity);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write grid file " + path.string());
  std::string text = "x0,x1,value\n";
  for (std::size_t i = 0; i < grid.value.size(); ++i) {
    text += fmt17(grid.x0[i]) + "," + fmt17(grid.x1[i]) + "," + fmt17(grid.value[i]) + "\n";
  }
  out << text;
}

void export_histograms(const std::vector<ScoreDump>& dumps, std::size_t bins,
                       const std::filesystem::path& path) {
  if (bins < 1) throw ConfigError("export_histograms: bins must be >= 1");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write histogram file " + path.string());
  std::string text = "score_kind,population,bin_lo,bin_hi,count\n";
  for (const ScoreDump& dump : dumps) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto* population : {&dump.id, &dump.ood}) {
      for (double s : *population) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
    }
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    const std::pair<const char*, const std::vector<double>*> populations[] = {{"id", &dump.id},
                                                                               {"ood", &dump.ood}};
    for (const auto& [name, values] : populations) {
      std::vector<std::size_t> counts(bins, 0);
      for (double s : *values) {
        auto b = static_cast<std::size_t>(std::floor((s - lo) / width));
        counts[std::min(b, bins - 1)] += 1;
      }
      for (std::size_t b = 0; b < bins; ++b) {
        const double bin_lo = lo + static_cast<double>(b) * width;
        const double bin_hi = b + 1 == bins ? hi : lo + static_cast<double>(b + 1) * width;
        text += dump.score_kind + "," + name + "," + fmt17(bin_lo) + "," + fmt17(bin_hi) + "," +
                std::to_string(counts[b]) + "\n";
      }
    }
  }
  out << text;
}

double round_percent(double percent) { return std::round(percent * 100.0) / 100.0; }

}  // namespace oodreg
