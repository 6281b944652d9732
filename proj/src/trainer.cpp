#include "oodreg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "oodreg/metrics.hpp"
#include "oodreg/scores.hpp"
#include "oodreg/seeds.hpp"

namespace oodreg {
namespace {

struct Candidate {
  std::size_t epoch = 0;
  double accuracy = 0.0;
  double key = 0.0;  // validation entropy-AUC, or accuracy without validation OOD data
  MlpModel model;
};

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

LossResult evaluate_objective(const TrainConfig& config, const Matrix& logits_in,
                              std::span<const int> labels, const Matrix* logits_out) {
  switch (config.objective) {
    case Objective::ce:
    case Objective::ce_l1:
      return cross_entropy_loss(logits_in, labels);
    case Objective::ce_cosine:
      return ce_cosine_loss(logits_in, labels, *logits_out, config.params.lambda);
    case Objective::cosine_margin:
      return cosine_margin_ranking_loss(logits_in, labels, *logits_out, config.params);
    case Objective::outlier_exposure:
      return outlier_exposure_loss(logits_in, labels, *logits_out, config.params.lambda);
  }
  throw ConfigError("unknown objective");
}

// Exact online form of the selection rule. An epoch that falls outside the
// accuracy guard never re-enters it, and an epoch beaten on both accuracy and
// AUC by an earlier one can never be selected, so only the Pareto front of
// eligible epochs is kept (with parameter snapshots).
class CheckpointSelector {
 public:
  void offer(std::size_t epoch, double accuracy, std::optional<double> auc, const MlpModel& model) {
    best_accuracy_ = std::max(best_accuracy_, accuracy);
    const double floor = best_accuracy_ - kAccuracyGuardPoints;
    std::erase_if(front_, [&](const Candidate& c) { return c.accuracy < floor; });
    const double key = auc.value_or(accuracy);
    for (const Candidate& c : front_) {
      if (c.accuracy >= accuracy && c.key >= key) return;
    }
    std::erase_if(front_, [&](const Candidate& c) { return accuracy >= c.accuracy && key > c.key; });
    front_.push_back({epoch, accuracy, key, model});
  }

  // Highest key, earliest epoch on ties.
  const Candidate* best() const {
    const Candidate* out = nullptr;
    for (const Candidate& c : front_) {
      if (!out || c.key > out->key || (c.key == out->key && c.epoch < out->epoch)) out = &c;
    }
    return out;
  }

 private:
  double best_accuracy_ = -std::numeric_limits<double>::infinity();
  std::vector<Candidate> front_;
};

}  // namespace

const char* to_string(Objective objective) {
  switch (objective) {
    case Objective::ce:
      return "ce";
    case Objective::ce_l1:
      return "ce_l1";
    case Objective::ce_cosine:
      return "ce_cosine";
    case Objective::cosine_margin:
      return "cosine_margin";
    case Objective::outlier_exposure:
      return "outlier_exposure";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& name) {
  for (Objective o : {Objective::ce, Objective::ce_l1, Objective::ce_cosine,
                      Objective::cosine_margin, Objective::outlier_exposure}) {
    if (name == to_string(o)) return o;
  }
  throw ConfigError("unknown objective '" + name + "'");
}

bool uses_ood_stream(Objective objective) {
  return objective == Objective::ce_cosine || objective == Objective::cosine_margin ||
         objective == Objective::outlier_exposure;
}

SeedPlan TrainConfig::seeds() const {
  SeedPlan plan;
  plan.init = init_seed.value_or(derive_seed(seed, seed_tag::kInit));
  plan.shuffle = shuffle_seed.value_or(derive_seed(seed, seed_tag::kShuffle));
  plan.dropout = dropout_seed.value_or(derive_seed(seed, seed_tag::kDropout));
  plan.mc = mc_seed.value_or(derive_seed(seed, seed_tag::kMcPass));
  return plan;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("config: learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("config: weight_decay must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("config: dropout_rate must lie in [0, 1)");
  }
  if (layer_dims.size() < 2) throw ConfigError("config: layer_dims needs >= 2 entries");
  if (params.k != layer_dims.back()) {
    throw ConfigError("config: objective k (" + std::to_string(params.k) +
                      ") must equal the output width (" + std::to_string(layer_dims.back()) + ")");
  }
  params.validate();
  if (objective == Objective::outlier_exposure && params.lambda < 0.0) {
    throw ConfigError("config: outlier_exposure needs lambda >= 0");
  }
  if (!(ce_l1_strength >= 0.0)) throw ConfigError("config: ce_l1_strength must be >= 0");
  if (mc_passes < 1) throw ConfigError("config: mc_passes must be >= 1");
}

OodStream::OodStream(std::size_t size, std::uint64_t seed) : order_(size) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  std::shuffle(order_.begin(), order_.end(), gen);
}

std::vector<std::size_t> OodStream::next(std::size_t count) {
  if (order_.empty()) throw DataError("ood stream: no outliers to draw from");
  std::vector<std::size_t> rows(count);
  for (std::size_t& r : rows) {
    r = order_[cursor_];
    cursor_ = (cursor_ + 1) % order_.size();
  }
  return rows;
}

MlpModel initial_model(const TrainConfig& config) {
  return init_mlp(config.layer_dims, config.dropout_rate, config.seeds().init);
}

ValidationMetrics validate_model(const MlpModel& model, const Benchmark& benchmark) {
  ValidationMetrics metrics;
  const PredictiveSamples val = single_pass_predict(model, benchmark.val.features);
  metrics.accuracy = accuracy(argmax_rows(val.probs.front()), benchmark.val.labels);
  if (benchmark.train_ood.size() > 0) {
    const PredictiveSamples ood = single_pass_predict(model, benchmark.train_ood.features);
    metrics.auc_entropy =
        100.0 * auc_roc(entropy_score(val), entropy_score(ood), Orientation::higher_is_ood);
  }
  return metrics;
}

TrainResult train(const TrainConfig& config, const Benchmark& benchmark, MlpModel model) {
  config.validate();
  model.validate();
  const DatasetSplit& id = benchmark.train;
  id.validate();
  benchmark.val.validate();
  if (model.input_dim() != static_cast<std::size_t>(id.features.cols())) {
    throw_shape_error("train: model input dim vs data", static_cast<std::size_t>(id.features.cols()),
                      model.input_dim());
  }
  if (model.num_classes() != config.params.k) {
    throw_shape_error("train: model output dim vs k", config.params.k, model.num_classes());
  }
  for (int y : id.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes()) {
      throw DataError("train: label " + std::to_string(y) + " outside the model's class range");
    }
  }
  const bool needs_ood = uses_ood_stream(config.objective);
  if (needs_ood && benchmark.train_ood.size() == 0) {
    throw DataError(std::string("train: objective ") + to_string(config.objective) +
                    " requires an auxiliary OOD stream but the train_ood split"
                    " (train_ood.csv) is missing or empty");
  }

  const SeedPlan seeds = config.seeds();
  OptimizerState optimizer =
      make_optimizer(model, config.learning_rate, config.momentum, config.weight_decay);

  OodStream ood_stream(benchmark.train_ood.size(), derive_seed(seeds.shuffle, seed_tag::kOodStream));

  TrainHistory history;
  CheckpointSelector selector;
  std::vector<std::size_t> order(id.size());
  std::vector<int> batch_labels;
  std::vector<std::size_t> batch_rows;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 gen(derive_seed(seeds.shuffle, epoch));
    std::shuffle(order.begin(), order.end(), gen);

    EpochRecord record;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      batch_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(start + count));
      batch_labels.clear();
      for (std::size_t r : batch_rows) batch_labels.push_back(id.labels[r]);

      const Matrix x_in = gather_rows(id.features, batch_rows);
      const ForwardResult in_pass =
          forward(model, x_in, ForwardMode::train, derive_seed(seeds.dropout, step, 0));
      std::optional<ForwardResult> out_pass;
      if (needs_ood) {
        out_pass = forward(model, gather_rows(benchmark.train_ood.features, ood_stream.next(count)),
                           ForwardMode::train, derive_seed(seeds.dropout, step, 1));
      }

      if (!in_pass.logits.allFinite() || (out_pass && !out_pass->logits.allFinite())) {
        throw TrainingDiverged("train: non-finite logits at epoch " + std::to_string(epoch + 1),
                               history);
      }
      LossResult loss = evaluate_objective(config, in_pass.logits, batch_labels,
                                           out_pass ? &out_pass->logits : nullptr);
      Gradients grads = backward(model, in_pass.trace, loss.d_logits_in);
      if (out_pass && loss.d_logits_out) grads += backward(model, out_pass->trace, *loss.d_logits_out);
      if (config.objective == Objective::ce_l1) {
        double l1 = 0.0;
        for (std::size_t l = 0; l < model.num_layers(); ++l) {
          l1 += model.weights[l].cwiseAbs().sum();
          grads.weights[l] += config.ce_l1_strength * model.weights[l].cwiseSign();
        }
        loss.terms["l1_weights"] = config.ce_l1_strength * l1;
        loss.loss += loss.terms["l1_weights"];
      }
      if (!std::isfinite(loss.loss)) {
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch + 1),
                               history);
      }
      try {
        sgd_step(model, grads, optimizer);
      } catch (const DivergenceError& e) {
        throw TrainingDiverged(std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) + ")",
                               history);
      }
      record.train_loss += loss.loss;
      for (const auto& [name, value] : loss.terms) record.terms[name] += value;
      ++batches;
    }
    record.train_loss /= static_cast<double>(batches);
    for (auto& [name, value] : record.terms) value /= static_cast<double>(batches);

    if (!forward(model, benchmark.val.features).logits.allFinite() ||
        (benchmark.train_ood.size() > 0 &&
         !forward(model, benchmark.train_ood.features).logits.allFinite())) {
      throw TrainingDiverged("train: non-finite logits at epoch " + std::to_string(epoch + 1),
                             history);
    }
    const ValidationMetrics val = validate_model(model, benchmark);
    record.val_accuracy = val.accuracy;
    record.val_auc_entropy = val.auc_entropy;
    history.epochs.push_back(record);
    selector.offer(epoch + 1, val.accuracy, val.auc_entropy, model);
  }

  const Candidate* best = selector.best();
  history.best_epoch = best->epoch;
  history.rollback_applied = history.best_epoch != history.epochs.size();
  return {best->model, std::move(history)};
}

TrainConfig apply_overrides(TrainConfig config, const std::map<std::string, double>& overrides) {
  for (const auto& [key, value] : overrides) {
    if (key == "lambda") {
      config.params.lambda = value;
    } else if (key == "gamma") {
      config.params.gamma = value;
    } else if (key == "lambda1") {
      config.params.lambda1 = value;
    } else if (key == "lambda2") {
      config.params.lambda2 = value;
    } else if (key == "alpha") {
      config.params.alpha = value;
    } else if (key == "learning_rate") {
      config.learning_rate = value;
    } else if (key == "ce_l1_strength") {
      config.ce_l1_strength = value;
    } else if (key == "dropout_rate") {
      config.dropout_rate = value;
    } else {
      throw ConfigError("sweep: unsupported override key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

SweepResult sweep(const TrainConfig& base, const std::vector<std::map<std::string, double>>& grid,
                  const Benchmark& benchmark, std::size_t jobs) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  std::vector<TrainConfig> configs;
  configs.reserve(grid.size());
  for (const auto& point : grid) configs.push_back(apply_overrides(base, point));

  std::vector<std::optional<TrainResult>> results(grid.size());
  std::vector<LeaderboardRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      LeaderboardRow& row = rows[i];
      row.grid_index = i;
      row.overrides = grid[i];
      try {
        TrainResult result = train(configs[i], benchmark, initial_model(configs[i]));
        const ValidationMetrics val = validate_model(result.model, benchmark);
        row.val_accuracy = val.accuracy;
        row.val_auc_entropy = val.auc_entropy;
        results[i] = std::move(result);
      } catch (const DivergenceError& e) {
        row.diverged = true;
        row.error = e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, grid.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  double best_accuracy = -1.0;
  for (const auto& row : rows) {
    if (!row.diverged) best_accuracy = std::max(best_accuracy, row.val_accuracy);
  }
  if (best_accuracy < 0.0) throw DivergenceError("sweep: every grid point diverged");
  for (auto& row : rows) {
    row.eligible = !row.diverged && row.val_accuracy >= best_accuracy - kAccuracyGuardPoints;
  }

  std::vector<LeaderboardRow> board = rows;
  std::stable_sort(board.begin(), board.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.diverged != b.diverged) return !a.diverged;
    if (a.eligible != b.eligible) return a.eligible;
    const double auc_a = a.val_auc_entropy.value_or(-1.0);
    const double auc_b = b.val_auc_entropy.value_or(-1.0);
    if (auc_a != auc_b) return auc_a > auc_b;
    if (a.val_accuracy != b.val_accuracy) return a.val_accuracy > b.val_accuracy;
    return a.grid_index < b.grid_index;
  });

  SweepResult out;
  out.best_index = board.front().grid_index;
  out.best_config = configs[out.best_index];
  out.best = std::move(*results[out.best_index]);
  out.leaderboard = std::move(board);
  return out;
}

}  // namespace oodreg
