#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodreg/mlp.hpp"

namespace oodreg {

/// Which end of a score scale indicates in-distribution data.
enum class Orientation { higher_is_id, higher_is_ood };

Orientation flipped(Orientation orientation);

/// Area under the ROC curve for separating OOD from ID, via the Mann-Whitney
/// rank statistic with average ranks for ties (a tie counts 1/2). O(n log n).
/// Returns a fraction in [0, 1].
double auc_roc(std::span<const double> id_scores, std::span<const double> ood_scores,
               Orientation orientation);

/// 100 * correct / N.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

std::vector<int> argmax_rows(const Matrix& scores);

/// error_percent[kind][severity], complete over the declared kinds and severities.
struct CorruptionTable {
  std::vector<std::string> kinds;
  std::vector<int> severities;
  std::map<std::string, std::map<int, double>> error_percent;

  void set(const std::string& kind, int severity, double error);
};

/// Sum over kinds of the severity-averaged error; no baseline normalisation.
double mce(const CorruptionTable& table);

struct GridBounds {
  double x0_min = -1.0;
  double x0_max = 1.0;
  double x1_min = -1.0;
  double x1_max = 1.0;
};

/// Bounding box of the points padded by pad_fraction of its extent on every side.
GridBounds padded_bounds(const Matrix& points, double pad_fraction = 0.2);

enum class GridQuantity { predicted_class, confidence, entropy };

GridQuantity grid_quantity_from_string(const std::string& name);
const char* to_string(GridQuantity quantity);

struct DecisionGrid {
  std::vector<double> x0;
  std::vector<double> x1;
  std::vector<double> value;
};

/// resolution x resolution regular grid (x1 outer, x0 inner), eval-mode model.
DecisionGrid compute_decision_grid(const MlpModel& model, const GridBounds& bounds,
                                   std::size_t resolution, GridQuantity quantity);

/// Writes compute_decision_grid() as CSV `x0,x1,value`.
void export_decision_grid(const MlpModel& model, const GridBounds& bounds, std::size_t resolution,
                          GridQuantity quantity, const std::filesystem::path& path);

struct ScoreDump {
  std::string score_kind;
  std::vector<double> id;
  std::vector<double> ood;
};

/// CSV `score_kind,population,bin_lo,bin_hi,count`. Both populations of a score
/// kind share one set of equal-width bins over their joint range.
void export_histograms(const std::vector<ScoreDump>& dumps, std::size_t bins,
                       const std::filesystem::path& path);

/// Accuracy and AUC summary; every percentage lies in [0, 100].
struct EvalReport {
  double id_accuracy = 0.0;
  std::map<std::string, double> auc;  // confidence, entropy, mutual_information, mahalanobis
  std::optional<double> mce;
  std::vector<std::string> artifact_paths;
  std::vector<std::string> warnings;
};

/// Percentages are rounded to two decimals.
double round_percent(double percent);

}  // namespace oodreg
