#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include "oodreg/mlp.hpp"

namespace oodreg {

/// Scalar loss plus gradients with respect to the ID and (optional) OOD logit
/// blocks. `terms` breaks the loss into its named components; they sum to `loss`.
struct LossResult {
  double loss = 0.0;
  Matrix d_logits_in;
  std::optional<Matrix> d_logits_out;
  std::map<std::string, double> terms;
};

struct ObjectiveParams {
  double lambda = 1.0;   // cosine / outlier-exposure strength (any sign for cosine)
  double gamma = -0.5;   // ranking margin
  double lambda1 = 0.3;  // l1 pull of OOD probabilities towards uniform
  double lambda2 = 0.2;  // l2 pull of the true-class ID probability towards alpha
  double alpha = 0.9;    // target true-class probability, in (0, 1]
  std::size_t k = 3;     // class count
  double tau = 0.5;      // NT-Xent temperature

  /// Throws ConfigError unless k >= 2, tau > 0, lambda1/lambda2 >= 0, alpha in (0, 1].
  void validate() const;
};

/// Mean negative log-likelihood of the true class; gradient (p - onehot) / N.
LossResult cross_entropy_loss(const Matrix& logits_in, std::span<const int> labels);

/// u.v / (|u| |v|). Throws on zero-norm input or size mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// CE + lambda * mean_i s(p_in_i, p_out_i) over full softmax rows, rows paired by index.
/// lambda = -1 turns the cosine term into a similarity-maximising (minimax) term.
LossResult ce_cosine_loss(const Matrix& logits_in, std::span<const int> labels,
                          const Matrix& logits_out, double lambda);

/// max(0, gamma + mean_i s(p_in_i, p_out_i))
///   + lambda1 * mean_i sum_c |p_out_ic - 1/k|
///   + lambda2 * mean_i (p_in_i,y_i - alpha)^2
/// Subgradient 0 at the hinge kink and at |.| kinks.
LossResult cosine_margin_ranking_loss(const Matrix& logits_in, std::span<const int> labels,
                                      const Matrix& logits_out, const ObjectiveParams& params);

/// CE + lambda * mean_i H(uniform, p_out_i).
LossResult outlier_exposure_loss(const Matrix& logits_in, std::span<const int> labels,
                                 const Matrix& logits_out, double lambda);

// Reference contrastive / ranking losses. Loss values only, not used by the trainer.

/// NT-Xent over 2n latent rows. partner[i] is the index of row i's positive.
/// Averages over every row as anchor; the anchor itself is excluded from the
/// denominator.
double ntxent_loss(const Matrix& latents, std::span<const std::size_t> partner, double tau);

/// y * d + (1 - y) * max(0, gamma - d), d the Euclidean distance.
double pairwise_ranking_loss(std::span<const double> z_a, std::span<const double> z_b, int y,
                             double gamma);

enum class TripletRegime { easy, semi_hard, hard };

const char* to_string(TripletRegime regime);

struct TripletResult {
  double loss = 0.0;
  TripletRegime regime = TripletRegime::easy;
};

/// max(0, gamma + d(z, z+) - d(z, z-)). The regime is read off the loss value:
/// zero loss is easy, loss above gamma (the negative is closer than the
/// positive) is hard, anything in between is semi-hard.
TripletResult triplet_ranking_loss(std::span<const double> anchor,
                                   std::span<const double> positive,
                                   std::span<const double> negative, double gamma);

}  // namespace oodreg
