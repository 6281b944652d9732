#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oodreg/config.hpp"
#include "oodreg/metrics.hpp"
#include "oodreg/synth.hpp"
#include "oodreg/trainer.hpp"

namespace oodreg {

struct EvalRequest {
  std::size_t mc_passes = 30;  // MC-Dropout passes; ignored for dropout-free models
  std::uint64_t mc_seed = 0;
  bool mahalanobis = true;
  std::vector<int> severities;  // empty: skip the corruption suite
  std::uint64_t corrupt_seed = 0;
  std::size_t grid_resolution = 200;
  std::size_t histogram_bins = 50;
};

struct CorruptionReport {
  double clean_error = 0.0;  // control row: uncorrupted test_id error, percent
  CorruptionTable table;
  double mce = 0.0;
};

struct EvalOutcome {
  EvalReport report;                              // auc: MC-Dropout when active, else single pass
  std::map<std::string, double> auc_single_pass;  // always computed
  bool mc_dropout_used = false;
  std::optional<CorruptionReport> corruption;
  std::vector<ScoreDump> dumps;
};

/// Scores test_id vs test_ood. Mahalanobis is fitted on penultimate features
/// of the ID train split. All percentages are rounded to two decimals.
EvalOutcome evaluate_model(const MlpModel& model, const Benchmark& benchmark,
                           const EvalRequest& request);

/// Error table over every corruption kind at the given severities, applied to test_id.
CorruptionReport corruption_eval(const MlpModel& model, const DatasetSplit& test_id,
                                 const std::vector<int>& severities, std::uint64_t seed);

/// Writes results.json, histograms.csv, scores_<kind>.csv and, for 2-D
/// models, decision_grid_<quantity>.csv. Returns the relative paths written.
std::vector<std::filesystem::path> write_eval_artifacts(const MlpModel& model,
                                                        const Benchmark& benchmark,
                                                        EvalOutcome& outcome,
                                                        const EvalRequest& request,
                                                        const std::filesystem::path& out_dir);

std::string results_to_json(const EvalOutcome& outcome);
std::string history_to_json(const TrainHistory& history);

EvalRequest eval_request_for(const RunConfig& config);

struct ExperimentResult {
  TrainResult trained;
  EvalOutcome eval;
  std::vector<std::filesystem::path> files;  // relative to out_dir
};

/// Train, evaluate and (when out_dir is given) write model.json, history.json,
/// config.json and the evaluation artifacts.
ExperimentResult run_experiment(const RunConfig& config, const Benchmark& benchmark,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace oodreg
