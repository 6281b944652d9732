#include "oodreg/experiment.hpp"

#include <fstream>

#include "json.hpp"
#include "oodreg/errors.hpp"
#include "oodreg/model_io.hpp"
#include "oodreg/scores.hpp"
#include "oodreg/seeds.hpp"

namespace oodreg {

using nlohmann::json;

namespace {

struct ScoreSet {
  std::vector<double> confidence, entropy, mutual_information;
};

ScoreSet score_all(const PredictiveSamples& samples) {
  return {confidence_score(samples), entropy_score(samples), mutual_information_score(samples)};
}

std::map<std::string, double> auc_map(const ScoreSet& id, const ScoreSet& ood) {
  return {
      {"confidence",
       round_percent(100.0 * auc_roc(id.confidence, ood.confidence, Orientation::higher_is_id))},
      {"entropy", round_percent(100.0 * auc_roc(id.entropy, ood.entropy, Orientation::higher_is_ood))},
      {"mutual_information",
       round_percent(100.0 * auc_roc(id.mutual_information, ood.mutual_information,
                                     Orientation::higher_is_ood))},
  };
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

Matrix stack_features(std::initializer_list<const DatasetSplit*> splits) {
  Eigen::Index rows = 0;
  for (const auto* s : splits) rows += s->features.rows();
  Matrix out(rows, splits.begin()[0]->features.cols());
  Eigen::Index at = 0;
  for (const auto* s : splits) {
    out.middleRows(at, s->features.rows()) = s->features;
    at += s->features.rows();
  }
  return out;
}

}  // namespace

CorruptionReport corruption_eval(const MlpModel& model, const DatasetSplit& test_id,
                                 const std::vector<int>& severities, std::uint64_t seed) {
  if (severities.empty()) throw ConfigError("corruption_eval: no severities");
  CorruptionReport report;
  report.clean_error =
      100.0 - accuracy(argmax_rows(predict_logits(model, test_id.features)), test_id.labels);
  const auto kinds = all_corruption_kinds();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    for (int severity : severities) {
      const DatasetSplit shifted =
          corrupt(test_id, {kinds[k], severity},
                  derive_seed(seed, seed_tag::kCorrupt, k * 16 + static_cast<std::size_t>(severity)));
      const double error =
          100.0 - accuracy(argmax_rows(predict_logits(model, shifted.features)), shifted.labels);
      report.table.set(to_string(kinds[k]), severity, error);
    }
  }
  report.mce = mce(report.table);
  return report;
}

EvalOutcome evaluate_model(const MlpModel& model, const Benchmark& benchmark,
                           const EvalRequest& request) {
  model.validate();
  benchmark.test_id.validate();
  benchmark.test_ood.validate();
  if (request.mc_passes < 1) throw ConfigError("eval: mc_passes must be >= 1");
  EvalOutcome out;

  const PredictiveSamples single_id = single_pass_predict(model, benchmark.test_id.features);
  const PredictiveSamples single_ood = single_pass_predict(model, benchmark.test_ood.features);
  out.report.id_accuracy =
      round_percent(accuracy(argmax_rows(single_id.probs.front()), benchmark.test_id.labels));
  const ScoreSet single_id_scores = score_all(single_id);
  const ScoreSet single_ood_scores = score_all(single_ood);
  out.auc_single_pass = auc_map(single_id_scores, single_ood_scores);

  out.mc_dropout_used = model.dropout_rate > 0.0 && request.mc_passes > 1;
  ScoreSet id_scores = single_id_scores;
  ScoreSet ood_scores = single_ood_scores;
  if (out.mc_dropout_used) {
    id_scores = score_all(mc_dropout_predict(model, benchmark.test_id.features, request.mc_passes,
                                             derive_seed(request.mc_seed, 0)));
    ood_scores = score_all(mc_dropout_predict(model, benchmark.test_ood.features, request.mc_passes,
                                              derive_seed(request.mc_seed, 1)));
    out.report.auc = auc_map(id_scores, ood_scores);
  } else {
    out.report.auc = out.auc_single_pass;
    if (model.dropout_rate == 0.0) {
      out.report.warnings.push_back(
          "mutual_information: model has dropout_rate 0, MI is identically 0 (AUC 50.00)");
    } else {
      out.report.warnings.push_back(
          "mutual_information: a single pass was requested, MI is identically 0 (AUC 50.00)");
    }
  }
  out.dumps = {{"confidence", id_scores.confidence, ood_scores.confidence},
               {"entropy", id_scores.entropy, ood_scores.entropy},
               {"mutual_information", id_scores.mutual_information, ood_scores.mutual_information}};

  if (request.mahalanobis) {
    const ForwardResult train_pass = forward(model, benchmark.train.features);
    const MahalanobisDetector detector =
        fit_mahalanobis(train_pass.trace.penultimate_features(), benchmark.train.labels);
    const auto id_m = mahalanobis_score(
        detector, forward(model, benchmark.test_id.features).trace.penultimate_features());
    const auto ood_m = mahalanobis_score(
        detector, forward(model, benchmark.test_ood.features).trace.penultimate_features());
    out.report.auc["mahalanobis"] =
        round_percent(100.0 * auc_roc(id_m, ood_m, Orientation::higher_is_id));
    out.dumps.push_back({"mahalanobis", id_m, ood_m});
  }

  if (!request.severities.empty()) {
    out.corruption =
        corruption_eval(model, benchmark.test_id, request.severities, request.corrupt_seed);
    out.report.mce = round_percent(out.corruption->mce);
  }
  return out;
}

std::string results_to_json(const EvalOutcome& outcome) {
  const EvalReport& r = outcome.report;
  json doc;
  doc["accuracy"] = r.id_accuracy;
  doc["auc"] = r.auc;
  doc["auc_single_pass"] = outcome.auc_single_pass;
  doc["mc_dropout"] = outcome.mc_dropout_used;
  if (r.mce) doc["mce"] = *r.mce;
  if (outcome.corruption) {
    json table = json::object();
    for (const auto& [kind, row] : outcome.corruption->table.error_percent) {
      json cells = json::object();
      for (const auto& [severity, error] : row) cells[std::to_string(severity)] = round_percent(error);
      table[kind] = std::move(cells);
    }
    doc["corruption"] = {{"clean_error", round_percent(outcome.corruption->clean_error)},
                         {"errors", std::move(table)}};
  }
  doc["warnings"] = r.warnings;
  doc["manifest"] = {{"file", "manifest.json"}, {"artifacts", r.artifact_paths}};
  return doc.dump(2) + "\n";
}

std::string history_to_json(const TrainHistory& history) {
  json epochs = json::array();
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochRecord& rec = history.epochs[e];
    json row = {{"epoch", e + 1},
                {"train_loss", rec.train_loss},
                {"terms", rec.terms},
                {"val_accuracy", rec.val_accuracy}};
    row["val_auc_entropy"] = rec.val_auc_entropy ? json(*rec.val_auc_entropy) : json(nullptr);
    epochs.push_back(std::move(row));
  }
  json doc = {{"best_epoch", history.best_epoch},
              {"rollback_applied", history.rollback_applied},
              {"epochs", std::move(epochs)}};
  return doc.dump(1) + "\n";
}

std::vector<std::filesystem::path> write_eval_artifacts(const MlpModel& model,
                                                        const Benchmark& benchmark,
                                                        EvalOutcome& outcome,
                                                        const EvalRequest& request,
                                                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  for (const ScoreDump& dump : outcome.dumps) {
    const std::filesystem::path rel = "scores_" + dump.score_kind + ".csv";
    write_score_dump(dump.id, dump.ood, out_dir / rel);
    files.push_back(rel);
  }
  export_histograms(outcome.dumps, request.histogram_bins, out_dir / "histograms.csv");
  files.emplace_back("histograms.csv");
  if (model.input_dim() == 2) {
    const GridBounds bounds = padded_bounds(
        stack_features({&benchmark.test_id, &benchmark.test_ood}), 0.2);
    for (GridQuantity q :
         {GridQuantity::predicted_class, GridQuantity::confidence, GridQuantity::entropy}) {
      const std::filesystem::path rel = std::string("decision_grid_") + to_string(q) + ".csv";
      export_decision_grid(model, bounds, request.grid_resolution, q, out_dir / rel);
      files.push_back(rel);
    }
  }
  files.emplace_back("results.json");
  for (const auto& f : files) outcome.report.artifact_paths.push_back(f.generic_string());
  write_text(out_dir / "results.json", results_to_json(outcome));
  return files;
}

EvalRequest eval_request_for(const RunConfig& config) {
  EvalRequest r;
  r.mc_passes = config.eval.mc_passes > 0 ? config.eval.mc_passes : config.train.mc_passes;
  r.mc_seed = config.train.seeds().mc;
  r.mahalanobis = config.eval.mahalanobis;
  if (config.eval.corruptions) r.severities = config.eval.severities;
  r.corrupt_seed = derive_seed(config.data_seed, seed_tag::kCorrupt);
  r.grid_resolution = config.eval.grid_resolution;
  r.histogram_bins = config.eval.histogram_bins;
  return r;
}

ExperimentResult run_experiment(const RunConfig& config, const Benchmark& benchmark,
                                const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  ExperimentResult result{train(config.train, benchmark, initial_model(config.train)), {}, {}};
  const EvalRequest request = eval_request_for(config);
  result.eval = evaluate_model(result.trained.model, benchmark, request);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    save_model(result.trained.model, *out_dir / "model.json");
    write_text(*out_dir / "history.json", history_to_json(result.trained.history));
    save_run_config(config, *out_dir / "config.json");
    result.files = {"config.json", "model.json", "history.json"};
    for (auto& f : write_eval_artifacts(result.trained.model, benchmark, result.eval, request, *out_dir)) {
      result.files.push_back(std::move(f));
    }
  }
  return result;
}

}  // namespace oodreg
