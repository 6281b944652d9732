#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "oodreg/mlp.hpp"

namespace oodreg {

/// T stochastic softmax passes over the same N inputs; probs[t] is N x k.
struct PredictiveSamples {
  std::vector<Matrix> probs;

  std::size_t passes() const { return probs.size(); }
  std::size_t examples() const { return probs.empty() ? 0 : static_cast<std::size_t>(probs[0].rows()); }
  std::size_t classes() const { return probs.empty() ? 0 : static_cast<std::size_t>(probs[0].cols()); }
  Matrix mean() const;
  void validate() const;
};

/// Pass t runs in mc_dropout mode with seed derive_seed(seed, kMcPass, t).
/// With dropout_rate == 0 every pass equals the eval-mode prediction.
PredictiveSamples mc_dropout_predict(const MlpModel& model, const Matrix& inputs, std::size_t passes,
                                     std::uint64_t seed);

/// A single deterministic eval-mode pass.
PredictiveSamples single_pass_predict(const MlpModel& model, const Matrix& inputs);

// Higher confidence means more ID; higher entropy / MI means more OOD.
std::vector<double> confidence_score(const PredictiveSamples& samples);
std::vector<double> entropy_score(const PredictiveSamples& samples);
std::vector<double> mutual_information_score(const PredictiveSamples& samples);

/// Shannon entropy in nats with 0 ln 0 = 0.
double entropy(std::span<const double> probs);

struct MahalanobisDetector {
  std::vector<Vector> class_means;
  Matrix covariance;  // tied, before shrinkage
  Matrix precision;   // inverse of (covariance + shrinkage I)
  double shrinkage = 0.0;

  std::size_t feature_dim() const { return static_cast<std::size_t>(precision.rows()); }
};

/// Per-class means and one pooled covariance. shrinkage defaults to
/// 1e-6 * trace(cov) / d; pass 0 to disable (a singular covariance then throws).
MahalanobisDetector fit_mahalanobis(const Matrix& features, std::span<const int> labels,
                                    std::optional<double> shrinkage = std::nullopt);

/// max_c -(f - mu_c)^T P (f - mu_c). Higher means more ID; 0 at a class mean.
std::vector<double> mahalanobis_score(const MahalanobisDetector& detector, const Matrix& features);

/// CSV `example_id,score,is_ood`: ID rows first (is_ood = 0), then OOD rows.
void write_score_dump(std::span<const double> id_scores, std::span<const double> ood_scores,
                      const std::filesystem::path& path);

}  // namespace oodreg
