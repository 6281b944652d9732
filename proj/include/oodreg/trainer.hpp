#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oodreg/errors.hpp"
#include "oodreg/mlp.hpp"
#include "oodreg/objectives.hpp"
#include "oodreg/synth.hpp"

namespace oodreg {

enum class Objective { ce, ce_l1, ce_cosine, cosine_margin, outlier_exposure };

const char* to_string(Objective objective);
Objective objective_from_string(const std::string& name);
bool uses_ood_stream(Objective objective);

/// Independent sub-seeds. Each defaults to a derivation of TrainConfig::seed.
struct SeedPlan {
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t dropout = 0;
  std::uint64_t mc = 0;
};

struct TrainConfig {
  Objective objective = Objective::ce;
  std::vector<std::size_t> layer_dims{2, 64, 64, 3};
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  double dropout_rate = 0.0;
  ObjectiveParams params;
  double ce_l1_strength = 1e-4;
  std::size_t mc_passes = 30;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> init_seed;
  std::optional<std::uint64_t> shuffle_seed;
  std::optional<std::uint64_t> dropout_seed;
  std::optional<std::uint64_t> mc_seed;

  SeedPlan seeds() const;
  /// Throws ConfigError on any out-of-range field.
  void validate() const;
};

struct EpochRecord {
  double train_loss = 0.0;
  std::map<std::string, double> terms;
  double val_accuracy = 0.0;                // percent
  std::optional<double> val_auc_entropy;    // percent; absent without validation OOD data
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch completed
  bool rollback_applied = false;
};

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

/// Divergence (non-finite loss or gradient) with the history recorded so far.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : DivergenceError(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

/// Cycles a fixed seeded permutation of 0..size-1; a request may wrap around
/// the end of the permutation.
class OodStream {
 public:
  OodStream(std::size_t size, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t count);
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Fresh model for the config: init_mlp(layer_dims, dropout_rate, seeds().init).
MlpModel initial_model(const TrainConfig& config);

/// Validation accuracy and entropy AUC (single eval pass). Validation OOD data is
/// the benchmark's train_ood split; the AUC is absent when that split is empty.
struct ValidationMetrics {
  double accuracy = 0.0;
  std::optional<double> auc_entropy;
};
ValidationMetrics validate_model(const MlpModel& model, const Benchmark& benchmark);

/// Mini-batch SGD over the ID train split. Objectives that consume auxiliary
/// outliers draw an equally sized OOD batch per step by cycling a fixed
/// permutation of train_ood. After every epoch the validation metrics are
/// recorded; at the end the parameters of the best epoch are restored. The
/// best epoch maximises validation entropy-AUC among epochs whose validation
/// accuracy is within 1 point of the best validation accuracy.
TrainResult train(const TrainConfig& config, const Benchmark& benchmark, MlpModel model);

/// Overrides applicable by a sweep grid point: lambda, gamma, lambda1, lambda2,
/// alpha, learning_rate, ce_l1_strength, dropout_rate.
TrainConfig apply_overrides(TrainConfig config, const std::map<std::string, double>& overrides);

struct LeaderboardRow {
  std::size_t grid_index = 0;
  std::map<std::string, double> overrides;
  bool diverged = false;
  std::string error;
  double val_accuracy = 0.0;
  std::optional<double> val_auc_entropy;
  bool eligible = false;  // within 1 accuracy point of the grid's best
};

struct SweepResult {
  std::size_t best_index = 0;
  TrainConfig best_config;
  TrainResult best;
  std::vector<LeaderboardRow> leaderboard;  // sorted by the selection criterion
};

inline constexpr double kAccuracyGuardPoints = 1.0;

/// Trains one model per grid point (all from the base seeds) on up to `jobs`
/// threads and selects by validation entropy-AUC among points within
/// kAccuracyGuardPoints of the best validation accuracy.
SweepResult sweep(const TrainConfig& base, const std::vector<std::map<std::string, double>>& grid,
                  const Benchmark& benchmark, std::size_t jobs = 1);

}  // namespace oodreg
