// oodreg command-line front end.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error (missing or malformed input), 4 training divergence.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "oodreg/config.hpp"
#include "oodreg/errors.hpp"
#include "oodreg/experiment.hpp"
#include "oodreg/manifest.hpp"
#include "oodreg/model_io.hpp"
#include "oodreg/seeds.hpp"
#include "oodreg/synth.hpp"
#include "oodreg/trainer.hpp"

namespace fs = std::filesystem;
using namespace oodreg;
using nlohmann::json;

namespace {

fs::path default_out(const std::string& command) {
  const char* root = std::getenv("OODREG_OUT");
  return fs::path(root && *root ? root : "runs") / command;
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void finish(const std::string& command, const RunConfig* config, const fs::path& out,
            std::vector<fs::path> files, std::chrono::system_clock::time_point started) {
  RunManifest m;
  m.command = command;
  if (config) {
    m.config_json = run_config_to_json(*config);
    m.data_seed = config->data_seed;
    m.seeds = config->train.seeds();
  }
  m.files = std::move(files);
  m.started = started;
  m.finished = std::chrono::system_clock::now();
  write_manifest(m, out);
  std::cout << "wrote " << out.string() << "\n";
}

json leaderboard_json(const SweepResult& result) {
  json rows = json::array();
  for (const LeaderboardRow& row : result.leaderboard) {
    json r = {{"grid_index", row.grid_index},
              {"overrides", row.overrides},
              {"diverged", row.diverged},
              {"eligible", row.eligible},
              {"val_accuracy", round_percent(row.val_accuracy)}};
    r["val_auc_entropy"] =
        row.val_auc_entropy ? json(round_percent(*row.val_auc_entropy)) : json(nullptr);
    if (row.diverged) r["error"] = row.error;
    rows.push_back(std::move(r));
  }
  return {{"best_index", result.best_index}, {"leaderboard", std::move(rows)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate OOD-aware classifiers on a synthetic Gaussian benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  const auto started = std::chrono::system_clock::now();

  std::string config_path, data_dir, out_dir, model_path, grid_path;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "Write the benchmark splits as CSV");
  gen->add_option("--config", config_path, "Run config (geometry and data seed)");
  gen->add_option("--out", out_dir, "Output directory");
  gen->add_option("--seed", seed, "Data seed (overrides the config)");

  auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
  tr->add_option("--config", config_path, "Run config")->required();
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--out", out_dir, "Output directory");
  tr->add_option("--seed", seed, "Training seed (overrides the config)");

  std::string scores = "confidence,entropy,mutual_information";
  std::size_t mc_passes = 30;
  bool with_mahalanobis = false;
  std::size_t grid_resolution = 200;
  std::size_t bins = 50;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained model");
  ev->add_option("--model", model_path, "Model JSON")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--out", out_dir, "Output directory");
  ev->add_option("--scores", scores, "Comma-separated score kinds");
  ev->add_option("--mc-passes", mc_passes, "MC-Dropout passes (1 disables MC)");
  ev->add_flag("--mahalanobis", with_mahalanobis, "Fit and score a Mahalanobis detector");
  ev->add_option("--seed", seed, "MC-Dropout seed");
  ev->add_option("--grid-resolution", grid_resolution, "Decision grid resolution");
  ev->add_option("--bins", bins, "Histogram bins");

  std::vector<int> severities{1, 2, 3, 4, 5};
  auto* ce = app.add_subcommand("corrupt-eval", "Corruption error table and mCE");
  ce->add_option("--model", model_path, "Model JSON")->required();
  ce->add_option("--data", data_dir, "Dataset directory")->required();
  ce->add_option("--out", out_dir, "Output directory");
  ce->add_option("--severities", severities, "Severities in 1..5")->delimiter(',');
  ce->add_option("--seed", seed, "Corruption seed");

  std::size_t jobs = 1;
  auto* sw = app.add_subcommand("sweep", "Hyperparameter sweep with validation selection");
  sw->add_option("--config", config_path, "Base run config")->required();
  sw->add_option("--grid", grid_path, "JSON list of override objects")->required();
  sw->add_option("--data", data_dir, "Dataset directory")->required();
  sw->add_option("--out", out_dir, "Output directory");
  sw->add_option("--jobs", jobs, "Worker threads");

  auto* ex = app.add_subcommand("experiment", "Generate data, train and evaluate in one run");
  ex->add_option("--config", config_path, "Run config")->required();
  ex->add_option("--out", out_dir, "Output directory");
  ex->add_option("--seed", seed, "Seed for data and training (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const fs::path out = out_dir.empty() ? default_out(command) : fs::path(out_dir);
    fs::create_directories(out);

    if (command == "gen-data") {
      RunConfig config = config_or_default(config_path);
      if (seed) config.data_seed = *seed;
      write_benchmark(make_default_benchmark(config.data_seed, config.geometry), out);
      finish(command, &config, out,
             {"train.csv", "val.csv", "test_id.csv", "test_ood.csv", "train_ood.csv"}, started);
    } else if (command == "train") {
      RunConfig config = load_run_config(config_path);
      if (seed) config.train.seed = *seed;
      const Benchmark benchmark = read_benchmark(data_dir);
      const TrainResult result = train(config.train, benchmark, initial_model(config.train));
      save_model(result.model, out / "model.json");
      write_text(out / "history.json", history_to_json(result.history));
      save_run_config(config, out / "config.json");
      finish(command, &config, out, {"config.json", "model.json", "history.json"}, started);
    } else if (command == "eval") {
      const MlpModel model = load_model(model_path);
      const Benchmark benchmark = read_benchmark(data_dir);
      EvalRequest request;
      request.mc_passes = mc_passes;
      request.mc_seed = seed.value_or(0);
      request.mahalanobis = with_mahalanobis;
      request.grid_resolution = grid_resolution;
      request.histogram_bins = bins;
      EvalOutcome outcome = evaluate_model(model, benchmark, request);

      std::set<std::string> wanted;
      std::stringstream ss(scores);
      for (std::string kind; std::getline(ss, kind, ',');) {
        if (kind != "confidence" && kind != "entropy" && kind != "mutual_information") {
          throw ConfigError("eval: unknown score kind '" + kind + "'");
        }
        wanted.insert(kind);
      }
      if (with_mahalanobis) wanted.insert("mahalanobis");
      std::erase_if(outcome.report.auc, [&](const auto& kv) { return !wanted.contains(kv.first); });
      std::erase_if(outcome.auc_single_pass,
                    [&](const auto& kv) { return !wanted.contains(kv.first); });
      std::erase_if(outcome.dumps,
                    [&](const ScoreDump& d) { return !wanted.contains(d.score_kind); });
      if (!wanted.contains("mutual_information")) {
        std::erase_if(outcome.report.warnings,
                      [](const std::string& w) { return w.starts_with("mutual_information"); });
      }
      auto files = write_eval_artifacts(model, benchmark, outcome, request, out);
      finish(command, nullptr, out, std::move(files), started);
    } else if (command == "corrupt-eval") {
      const MlpModel model = load_model(model_path);
      const Benchmark benchmark = read_benchmark(data_dir);
      const CorruptionReport report = corruption_eval(
          model, benchmark.test_id, severities, derive_seed(seed.value_or(0), seed_tag::kCorrupt));
      json table = json::object();
      for (const auto& [kind, row] : report.table.error_percent) {
        json cells = json::object();
        for (const auto& [severity, error] : row) cells[std::to_string(severity)] = round_percent(error);
        table[kind] = std::move(cells);
      }
      const json doc = {{"clean_error", round_percent(report.clean_error)},
                        {"kinds", report.table.kinds},
                        {"severities", report.table.severities},
                        {"errors", std::move(table)},
                        {"mce", round_percent(report.mce)}};
      write_text(out / "corruption.json", doc.dump(2) + "\n");
      finish(command, nullptr, out, {"corruption.json"}, started);
    } else if (command == "sweep") {
      const RunConfig config = load_run_config(config_path);
      const auto grid = load_grid(grid_path);
      const Benchmark benchmark = read_benchmark(data_dir);
      const SweepResult result = sweep(config.train, grid, benchmark, jobs);
      RunConfig best = config;
      best.train = result.best_config;
      write_text(out / "leaderboard.json", leaderboard_json(result).dump(2) + "\n");
      save_model(result.best.model, out / "model.json");
      write_text(out / "history.json", history_to_json(result.best.history));
      save_run_config(best, out / "best_config.json");
      finish(command, &config, out, {"leaderboard.json", "best_config.json", "model.json", "history.json"},
             started);
    } else if (command == "experiment") {
      RunConfig config = load_run_config(config_path);
      if (seed) {
        config.train.seed = *seed;
        config.data_seed = *seed;
      }
      const Benchmark benchmark = make_default_benchmark(config.data_seed, config.geometry);
      const ExperimentResult result = run_experiment(config, benchmark, out);
      finish(command, &config, out, result.files, started);
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << " (after " << e.history().epochs.size()
              << " completed epochs)\n";
    return 4;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
