#include "oodreg/scores.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <string>

#include "oodreg/errors.hpp"
#include "oodreg/seeds.hpp"

namespace oodreg {
namespace {

std::span<const double> row_of(const Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

Matrix PredictiveSamples::mean() const {
  validate();
  Matrix total = probs.front();
  for (std::size_t t = 1; t < probs.size(); ++t) total += probs[t];
  return total / static_cast<double>(probs.size());
}

void PredictiveSamples::validate() const {
  if (probs.empty()) throw ConfigError("predictive samples: need at least one pass");
  for (const Matrix& p : probs) {
    if (p.rows() != probs[0].rows() || p.cols() != probs[0].cols()) {
      throw ConfigError("predictive samples: passes have inconsistent shapes");
    }
  }
}

PredictiveSamples mc_dropout_predict(const MlpModel& model, const Matrix& inputs, std::size_t passes,
                                     std::uint64_t seed) {
  if (passes < 1) throw ConfigError("mc_dropout_predict: need T >= 1 passes");
  PredictiveSamples samples;
  samples.probs.reserve(passes);
  for (std::size_t t = 0; t < passes; ++t) {
    const auto pass_seed = derive_seed(seed, seed_tag::kMcPass, t);
    samples.probs.push_back(
        softmax(forward(model, inputs, ForwardMode::mc_dropout, pass_seed).logits));
  }
  return samples;
}

PredictiveSamples single_pass_predict(const MlpModel& model, const Matrix& inputs) {
  PredictiveSamples samples;
  samples.probs.push_back(softmax(predict_logits(model, inputs)));
  return samples;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::vector<double> confidence_score(const PredictiveSamples& samples) {
  const Matrix mean = samples.mean();
  std::vector<double> out(static_cast<std::size_t>(mean.rows()));
  for (Eigen::Index i = 0; i < mean.rows(); ++i) out[static_cast<std::size_t>(i)] = mean.row(i).maxCoeff();
  return out;
}

std::vector<double> entropy_score(const PredictiveSamples& samples) {
  const Matrix mean = samples.mean();
  std::vector<double> out(static_cast<std::size_t>(mean.rows()));
  for (Eigen::Index i = 0; i < mean.rows(); ++i) out[static_cast<std::size_t>(i)] = entropy(row_of(mean, i));
  return out;
}

std::vector<double> mutual_information_score(const PredictiveSamples& samples) {
  std::vector<double> out = entropy_score(samples);
  if (samples.passes() == 1) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  const double inv_t = 1.0 / static_cast<double>(samples.passes());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double expected = 0.0;
    for (const Matrix& p : samples.probs) expected += entropy(row_of(p, static_cast<Eigen::Index>(i)));
    // Jensen gap; clamp rounding noise so MI stays within [0, H].
    out[i] = std::clamp(out[i] - expected * inv_t, 0.0, out[i]);
  }
  return out;
}

MahalanobisDetector fit_mahalanobis(const Matrix& features, std::span<const int> labels,
                                    std::optional<double> shrinkage) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw_shape_error("fit_mahalanobis: label count", static_cast<std::size_t>(features.rows()),
                      labels.size());
  }
  if (features.cols() == 0) throw ConfigError("fit_mahalanobis: zero-width features");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Eigen::Index>(i));
  if (by_class.empty()) throw ConfigError("fit_mahalanobis: no samples");

  const Eigen::Index d = features.cols();
  MahalanobisDetector detector;
  detector.covariance = Matrix::Zero(d, d);
  for (const auto& [label, rows] : by_class) {
    if (rows.size() < 2) {
      throw ConfigError("fit_mahalanobis: class " + std::to_string(label) +
                        " needs at least two samples");
    }
    Vector mu = Vector::Zero(d);
    for (Eigen::Index r : rows) mu += features.row(r).transpose();
    mu /= static_cast<double>(rows.size());
    for (Eigen::Index r : rows) {
      const Vector centered = features.row(r).transpose() - mu;
      detector.covariance += centered * centered.transpose();
    }
    detector.class_means.push_back(std::move(mu));
  }
  detector.covariance /= static_cast<double>(labels.size());
  detector.covariance = 0.5 * (detector.covariance + detector.covariance.transpose()).eval();

  detector.shrinkage =
      shrinkage.value_or(1e-6 * detector.covariance.trace() / static_cast<double>(d));
  if (!(detector.shrinkage >= 0.0)) throw ConfigError("fit_mahalanobis: shrinkage must be >= 0");
  const Matrix regularised = detector.covariance + detector.shrinkage * Matrix::Identity(d, d);
  const Eigen::LLT<Matrix> llt(regularised);
  const double scale = std::max(regularised.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <=
                                          1e-12 * std::sqrt(scale)) {
    throw ConfigError(
        "fit_mahalanobis: covariance is singular; use a shrinkage epsilon > 0");
  }
  Matrix precision = llt.solve(Matrix::Identity(d, d));
  if (!precision.allFinite()) {
    throw ConfigError("fit_mahalanobis: covariance is singular; use a shrinkage epsilon > 0");
  }
  detector.precision = 0.5 * (precision + precision.transpose());
  return detector;
}

std::vector<double> mahalanobis_score(const MahalanobisDetector& detector, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != detector.feature_dim()) {
    throw_shape_error("mahalanobis_score: feature dim", detector.feature_dim(),
                      static_cast<std::size_t>(features.cols()));
  }
  std::vector<double> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (const Vector& mu : detector.class_means) {
      const Vector diff = features.row(i).transpose() - mu;
      best = std::max(best, -diff.dot(detector.precision * diff));
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

void write_score_dump(std::span<const double> id_scores, std::span<const double> ood_scores,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write score dump " + path.string());
  out << "example_id,score,is_ood\n";
  char buf[48];
  std::size_t id = 0;
  for (double s : id_scores) {
    std::snprintf(buf, sizeof buf, "%.17g", s);
    out << id++ << ',' << buf << ",0\n";
  }
  for (double s : ood_scores) {
    std::snprintf(buf, sizeof buf, "%.17g", s);
    out << id++ << ',' << buf << ",1\n";
  }
}

}  // namespace oodreg
