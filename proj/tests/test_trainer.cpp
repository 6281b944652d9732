#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "oodreg/errors.hpp"
#include "oodreg/seeds.hpp"
#include "oodreg/trainer.hpp"

using namespace oodreg;

namespace {

BenchmarkGeometry small_geometry() {
  BenchmarkGeometry g;
  g.id_points_per_class = 60;
  g.ood_points_per_component = 30;
  return g;
}

TrainConfig small_config(Objective objective) {
  TrainConfig c;
  c.objective = objective;
  c.layer_dims = {2, 16, 16, 3};
  c.epochs = 8;
  c.batch_size = 32;
  return c;
}

const Benchmark& small_benchmark() {
  static const Benchmark b = make_default_benchmark(0, small_geometry());
  return b;
}

bool same_weights(const MlpModel& a, const MlpModel& b) {
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
  }
  return true;
}

// Offline statement of the checkpoint rule over a finished history.
std::size_t offline_best_epoch(const TrainHistory& h) {
  double best_acc = -1.0;
  for (const auto& e : h.epochs) best_acc = std::max(best_acc, e.val_accuracy);
  std::size_t best = 0;
  double best_key = -1.0;
  for (std::size_t i = 0; i < h.epochs.size(); ++i) {
    const auto& e = h.epochs[i];
    if (e.val_accuracy < best_acc - kAccuracyGuardPoints) continue;
    const double key = e.val_auc_entropy.value_or(e.val_accuracy);
    if (key > best_key) {
      best_key = key;
      best = i + 1;
    }
  }
  return best;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.params.k = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(objective_from_string("mse"), ConfigError);
}

TEST(TrainConfig, SeedPlanDerivesIndependentStreams) {
  TrainConfig c;
  c.seed = 3;
  const SeedPlan p = c.seeds();
  EXPECT_NE(p.init, p.shuffle);
  EXPECT_NE(p.shuffle, p.dropout);
  EXPECT_NE(p.dropout, p.mc);
  c.init_seed = 77;
  EXPECT_EQ(c.seeds().init, 77u);
  EXPECT_EQ(c.seeds().shuffle, p.shuffle);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig c = small_config(Objective::ce);
  c.learning_rate = 0.0;
  const MlpModel start = initial_model(c);
  const TrainResult r = train(c, small_benchmark(), start);
  EXPECT_TRUE(same_weights(r.model, start));
  for (const auto& e : r.history.epochs) {
    EXPECT_EQ(e.val_accuracy, r.history.epochs.front().val_accuracy);
    EXPECT_EQ(e.val_auc_entropy, r.history.epochs.front().val_auc_entropy);
  }
}

TEST(Train, DeterministicForFixedSeed) {
  for (Objective o : {Objective::ce, Objective::ce_cosine, Objective::cosine_margin}) {
    TrainConfig c = small_config(o);
    c.dropout_rate = 0.2;
    const TrainResult a = train(c, small_benchmark(), initial_model(c));
    const TrainResult b = train(c, small_benchmark(), initial_model(c));
    EXPECT_TRUE(same_weights(a.model, b.model)) << to_string(o);
    EXPECT_EQ(a.history.best_epoch, b.history.best_epoch);
  }
}

TEST(Train, RollbackRestoresTheSelectedEpoch) {
  for (Objective o : {Objective::ce, Objective::ce_cosine, Objective::outlier_exposure}) {
    TrainConfig c = small_config(o);
    c.epochs = 15;
    const TrainResult r = train(c, small_benchmark(), initial_model(c));
    ASSERT_EQ(r.history.epochs.size(), 15u);
    EXPECT_EQ(r.history.best_epoch, offline_best_epoch(r.history)) << to_string(o);
    EXPECT_LE(r.history.best_epoch, 15u);
    EXPECT_EQ(r.history.rollback_applied, r.history.best_epoch != 15u);
    const ValidationMetrics now = validate_model(r.model, small_benchmark());
    const EpochRecord& chosen = r.history.epochs[r.history.best_epoch - 1];
    EXPECT_EQ(now.accuracy, chosen.val_accuracy);
    EXPECT_EQ(now.auc_entropy, chosen.val_auc_entropy);
  }
}

TEST(Train, LossDecreasesOnDefaultBenchmark) {
  TrainConfig c;
  c.epochs = 20;
  const TrainResult r = train(c, make_default_benchmark(0), initial_model(c));
  EXPECT_LT(r.history.epochs[19].train_loss, r.history.epochs[0].train_loss);
}

TEST(Train, TermBreakdownIsRecorded) {
  TrainConfig c = small_config(Objective::cosine_margin);
  const TrainResult r = train(c, small_benchmark(), initial_model(c));
  for (const auto& e : r.history.epochs) {
    double sum = 0.0;
    for (const auto& [name, v] : e.terms) sum += v;
    EXPECT_NEAR(sum, e.train_loss, 1e-9);
    EXPECT_TRUE(e.terms.contains("hinge") && e.terms.contains("l1") && e.terms.contains("l2"));
  }
  TrainConfig l1 = small_config(Objective::ce_l1);
  EXPECT_TRUE(train(l1, small_benchmark(), initial_model(l1)).history.epochs[0].terms.contains("l1_weights"));
}

TEST(Train, MissingOodStreamIsADataError) {
  Benchmark b = small_benchmark();
  b.train_ood.features = Matrix(0, 2);
  for (Objective o : {Objective::ce_cosine, Objective::cosine_margin, Objective::outlier_exposure}) {
    TrainConfig c = small_config(o);
    try {
      train(c, b, initial_model(c));
      FAIL() << "expected DataError";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("train_ood"), std::string::npos);
    }
  }
  TrainConfig ce = small_config(Objective::ce);
  const TrainResult r = train(ce, b, initial_model(ce));
  EXPECT_FALSE(r.history.epochs.front().val_auc_entropy.has_value());
}

TEST(Train, DivergenceCarriesHistory) {
  TrainConfig c = small_config(Objective::ce);
  c.learning_rate = 1e6;
  c.momentum = 0.99;
  c.epochs = 50;
  try {
    train(c, small_benchmark(), initial_model(c));
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_LT(e.history().epochs.size(), 50u);
  }
}

TEST(Train, ShapeMismatchIsRejected) {
  TrainConfig c = small_config(Objective::ce);
  const MlpModel wrong = init_mlp(std::vector<std::size_t>{3, 4, 3}, 0.0, 0);
  EXPECT_THROW(train(c, small_benchmark(), wrong), ConfigError);
}

TEST(Train, SeedIsolation) {
  TrainConfig a = small_config(Objective::ce);
  a.dropout_rate = 0.3;
  TrainConfig b = a;
  b.dropout_seed = 12345;
  // Different dropout stream, same init and data order.
  EXPECT_TRUE(same_weights(initial_model(a), initial_model(b)));
  EXPECT_EQ(a.seeds().shuffle, b.seeds().shuffle);
  EXPECT_FALSE(same_weights(train(a, small_benchmark(), initial_model(a)).model,
                            train(b, small_benchmark(), initial_model(b)).model));
  // The data seed is not part of TrainConfig at all.
  EXPECT_EQ(make_default_benchmark(0, small_geometry()).train.features, small_benchmark().train.features);
}

TEST(OodStream, EveryOutlierConsumedWithinTheBound) {
  // ID sizes and batch sizes chosen so |train_ood| is not a multiple of the batch.
  for (auto [n_ood, n_id, batch] : {std::tuple<std::size_t, std::size_t, std::size_t>{1000, 1050, 64},
                                    {250, 100, 7},
                                    {97, 30, 8},
                                    {10, 1050, 64}}) {
    const std::size_t epochs = (n_ood + n_id - 1) / n_id;
    OodStream stream(n_ood, 42);
    for (std::size_t window = 0; window < 3; ++window) {
      std::vector<int> seen(n_ood, 0);
      for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t start = 0; start < n_id; start += batch) {
          for (std::size_t r : stream.next(std::min(batch, n_id - start))) seen[r]++;
        }
      }
      EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c > 0; }))
          << n_ood << " outliers, " << n_id << " ID rows";
    }
  }
  EXPECT_THROW(OodStream(0, 1).next(1), DataError);
}

TEST(OodStream, IsASeededPermutation) {
  OodStream a(50, 3), b(50, 3), c(50, 4);
  auto first = a.next(50);
  EXPECT_EQ(first, b.next(50));
  EXPECT_NE(first, c.next(50));
  std::sort(first.begin(), first.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(first[i], i);
}

TEST(Sweep, SingletonGridReturnsThatConfig) {
  TrainConfig base = small_config(Objective::ce_cosine);
  const SweepResult s = sweep(base, {{{"lambda", 0.5}}}, small_benchmark());
  EXPECT_EQ(s.best_index, 0u);
  EXPECT_EQ(s.best_config.params.lambda, 0.5);
  ASSERT_EQ(s.leaderboard.size(), 1u);
  EXPECT_TRUE(s.leaderboard[0].eligible);
}

TEST(Sweep, LeaderboardSortedAndScheduleIndependent) {
  TrainConfig base = small_config(Objective::cosine_margin);
  const std::vector<std::map<std::string, double>> grid{
      {{"gamma", -0.5}}, {{"gamma", -0.2}, {"lambda1", 0.5}}, {{"lambda2", 0.5}}, {{"lambda1", 0.1}}};
  const SweepResult serial = sweep(base, grid, small_benchmark(), 1);
  const SweepResult parallel = sweep(base, grid, small_benchmark(), 4);
  ASSERT_EQ(serial.leaderboard.size(), grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(serial.leaderboard[i].grid_index, parallel.leaderboard[i].grid_index);
    EXPECT_EQ(serial.leaderboard[i].val_auc_entropy, parallel.leaderboard[i].val_auc_entropy);
  }
  EXPECT_TRUE(same_weights(serial.best.model, parallel.best.model));
  for (std::size_t i = 1; i < serial.leaderboard.size(); ++i) {
    const auto& prev = serial.leaderboard[i - 1];
    const auto& cur = serial.leaderboard[i];
    if (prev.eligible == cur.eligible) {
      EXPECT_GE(prev.val_auc_entropy.value_or(-1), cur.val_auc_entropy.value_or(-1));
    } else {
      EXPECT_TRUE(prev.eligible);
    }
  }
  EXPECT_EQ(serial.best_index, serial.leaderboard.front().grid_index);
}

TEST(Sweep, BestConfigReplaysItsMetrics) {
  TrainConfig base = small_config(Objective::ce_cosine);
  const SweepResult s = sweep(base, {{{"lambda", 1.0}}, {{"lambda", -1.0}}}, small_benchmark(), 2);
  const TrainResult replay = train(s.best_config, small_benchmark(), initial_model(s.best_config));
  const ValidationMetrics m = validate_model(replay.model, small_benchmark());
  EXPECT_EQ(m.accuracy, s.leaderboard.front().val_accuracy);
  EXPECT_EQ(m.auc_entropy, s.leaderboard.front().val_auc_entropy);
}

TEST(Sweep, RejectsEmptyGridAndUnknownKeys) {
  TrainConfig base = small_config(Objective::ce);
  EXPECT_THROW(sweep(base, {}, small_benchmark()), ConfigError);
  EXPECT_THROW(sweep(base, {{{"momentum", 0.5}}}, small_benchmark()), ConfigError);
}

TEST(Sweep, AllDivergedThrows) {
  TrainConfig base = small_config(Objective::ce);
  base.momentum = 0.99;
  base.epochs = 50;
  EXPECT_THROW(sweep(base, {{{"learning_rate", 1e6}}, {{"learning_rate", 1e7}}}, small_benchmark()),
               DivergenceError);
}
