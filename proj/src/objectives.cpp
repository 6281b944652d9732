#include "oodreg/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "oodreg/errors.hpp"

namespace oodreg {
namespace {

void check_labels(const Matrix& logits, std::span<const int> labels, const char* who) {
  if (logits.rows() == 0) throw ConfigError(std::string(who) + ": empty batch");
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw_shape_error(std::string(who) + ": label count", static_cast<std::size_t>(logits.rows()),
                      labels.size());
  }
  for (int y : labels) {
    if (y < 0 || y >= logits.cols()) {
      throw ConfigError(std::string(who) + ": label " + std::to_string(y) +
                        " outside [0, " + std::to_string(logits.cols()) + ")");
    }
  }
}

void check_paired(const Matrix& logits_in, const Matrix& logits_out, const char* who) {
  if (logits_in.rows() != logits_out.rows()) {
    throw_shape_error(std::string(who) + ": OOD batch size must equal ID batch size",
                      static_cast<std::size_t>(logits_in.rows()),
                      static_cast<std::size_t>(logits_out.rows()));
  }
  if (logits_in.cols() != logits_out.cols()) {
    throw_shape_error(std::string(who) + ": OOD logit width",
                      static_cast<std::size_t>(logits_in.cols()),
                      static_cast<std::size_t>(logits_out.cols()));
  }
}

// Chain rule through a row-wise softmax: dL/dz = p * (g - <g, p>).
Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs) {
  Matrix d_logits(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double inner = probs.row(i).dot(d_probs.row(i));
    d_logits.row(i) = probs.row(i).array() * (d_probs.row(i).array() - inner);
  }
  return d_logits;
}

std::span<const double> row_span(const Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

// Mean pairwise cosine and its gradients w.r.t. both probability blocks
// (already divided by N).
struct CosineBlock {
  double mean = 0.0;
  Matrix d_in;
  Matrix d_out;
};

CosineBlock mean_row_cosine(const Matrix& p_in, const Matrix& p_out) {
  const Eigen::Index n = p_in.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  CosineBlock block;
  block.d_in.resize(p_in.rows(), p_in.cols());
  block.d_out.resize(p_out.rows(), p_out.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double na = p_in.row(i).norm();
    const double nb = p_out.row(i).norm();
    if (na == 0.0 || nb == 0.0) {
      throw ConfigError("cosine: zero-norm probability row " + std::to_string(i));
    }
    const double s = p_in.row(i).dot(p_out.row(i)) / (na * nb);
    total += s;
    block.d_in.row(i) = (p_out.row(i) / (na * nb) - s * p_in.row(i) / (na * na)) * inv_n;
    block.d_out.row(i) = (p_in.row(i) / (na * nb) - s * p_out.row(i) / (nb * nb)) * inv_n;
  }
  block.mean = total * inv_n;
  return block;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw_shape_error("distance: vector length", a.size(), b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum);
}

}  // namespace

void ObjectiveParams::validate() const {
  if (k < 2) throw ConfigError("objective params: k must be >= 2");
  if (!(tau > 0.0)) throw ConfigError("objective params: tau must be > 0");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ConfigError("objective params: lambda1 and lambda2 must be >= 0");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("objective params: alpha must lie in (0, 1]");
  }
  if (!std::isfinite(lambda) || !std::isfinite(gamma)) {
    throw ConfigError("objective params: lambda and gamma must be finite");
  }
}

LossResult cross_entropy_loss(const Matrix& logits_in, std::span<const int> labels) {
  check_labels(logits_in, labels, "cross_entropy_loss");
  const Matrix probs = softmax(logits_in);
  const Eigen::Index n = logits_in.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossResult result;
  result.d_logits_in = probs;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    // log p_y via log-sum-exp so extreme logits give an exact 0 rather than log(1 - eps).
    const double shift = logits_in.row(i).maxCoeff();
    const double lse = shift + std::log((logits_in.row(i).array() - shift).exp().sum());
    total += lse - logits_in(i, y);
    result.d_logits_in(i, y) -= 1.0;
  }
  result.d_logits_in *= inv_n;
  result.loss = total * inv_n;
  result.terms["ce"] = result.loss;
  return result;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw_shape_error("cosine_similarity: length", u.size(), v.size());
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw ConfigError("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

LossResult ce_cosine_loss(const Matrix& logits_in, std::span<const int> labels,
                          const Matrix& logits_out, double lambda) {
  if (!std::isfinite(lambda)) throw ConfigError("ce_cosine_loss: lambda must be finite");
  check_paired(logits_in, logits_out, "ce_cosine_loss");
  LossResult result = cross_entropy_loss(logits_in, labels);
  const Matrix p_in = softmax(logits_in);
  const Matrix p_out = softmax(logits_out);
  const CosineBlock cosine = mean_row_cosine(p_in, p_out);

  const double ce = result.terms.at("ce");
  const double reg = lambda * cosine.mean;
  result.terms["cosine"] = reg;
  result.loss = ce + reg;
  result.d_logits_in += softmax_backward(p_in, lambda * cosine.d_in);
  result.d_logits_out = softmax_backward(p_out, lambda * cosine.d_out);
  return result;
}

LossResult cosine_margin_ranking_loss(const Matrix& logits_in, std::span<const int> labels,
                                      const Matrix& logits_out, const ObjectiveParams& params) {
  params.validate();
  check_labels(logits_in, labels, "cosine_margin_ranking_loss");
  check_paired(logits_in, logits_out, "cosine_margin_ranking_loss");
  if (static_cast<std::size_t>(logits_in.cols()) != params.k) {
    throw_shape_error("cosine_margin_ranking_loss: params.k vs logit width", params.k,
                      static_cast<std::size_t>(logits_in.cols()));
  }
  const Matrix p_in = softmax(logits_in);
  const Matrix p_out = softmax(logits_out);
  const Eigen::Index n = p_in.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double uniform = 1.0 / static_cast<double>(params.k);

  const CosineBlock cosine = mean_row_cosine(p_in, p_out);
  const double margin = params.gamma + cosine.mean;
  const bool hinge_active = margin > 0.0;
  Matrix g_in = Matrix::Zero(p_in.rows(), p_in.cols());
  Matrix g_out = Matrix::Zero(p_out.rows(), p_out.cols());
  if (hinge_active) {
    g_in = cosine.d_in;
    g_out = cosine.d_out;
  }

  double l1_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < p_out.cols(); ++c) {
      const double diff = p_out(i, c) - uniform;
      l1_sum += std::abs(diff);
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      g_out(i, c) += params.lambda1 * sign * inv_n;
    }
  }

  double l2_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double diff = p_in(i, y) - params.alpha;
    l2_sum += diff * diff;
    g_in(i, y) += 2.0 * params.lambda2 * diff * inv_n;
  }

  LossResult result;
  result.terms["hinge"] = hinge_active ? margin : 0.0;
  result.terms["l1"] = params.lambda1 * l1_sum * inv_n;
  result.terms["l2"] = params.lambda2 * l2_sum * inv_n;
  result.loss = result.terms["hinge"] + result.terms["l1"] + result.terms["l2"];
  result.d_logits_in = softmax_backward(p_in, g_in);
  result.d_logits_out = softmax_backward(p_out, g_out);
  return result;
}

LossResult outlier_exposure_loss(const Matrix& logits_in, std::span<const int> labels,
                                 const Matrix& logits_out, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("outlier_exposure_loss: lambda must be finite and >= 0");
  }
  check_paired(logits_in, logits_out, "outlier_exposure_loss");
  LossResult result = cross_entropy_loss(logits_in, labels);
  const Matrix p_out = softmax(logits_out);
  const Eigen::Index n = logits_out.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double k = static_cast<double>(logits_out.cols());

  // Cross-entropy against uniform: lse(z) - mean_c z_c; gradient p - 1/k.
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shift = logits_out.row(i).maxCoeff();
    const double lse = shift + std::log((logits_out.row(i).array() - shift).exp().sum());
    total += lse - logits_out.row(i).mean();
  }
  const double ce = result.terms.at("ce");
  const double oe = lambda * total * inv_n;
  result.terms["oe"] = oe;
  result.loss = ce + oe;
  result.d_logits_out = ((p_out.array() - 1.0 / k) * (lambda * inv_n)).matrix();
  return result;
}

double ntxent_loss(const Matrix& latents, std::span<const std::size_t> partner, double tau) {
  if (!(tau > 0.0)) throw ConfigError("ntxent_loss: tau must be > 0");
  const auto rows = static_cast<std::size_t>(latents.rows());
  if (rows < 2 || rows % 2 != 0) {
    throw ConfigError("ntxent_loss: need an even number (2n >= 2) of latent rows");
  }
  if (partner.size() != rows) throw_shape_error("ntxent_loss: pairing length", rows, partner.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = partner[i];
    if (j >= rows || j == i || partner[j] != i) {
      throw ConfigError("ntxent_loss: row " + std::to_string(i) + " is unpaired");
    }
  }

  Matrix sim(latents.rows(), latents.rows());
  for (Eigen::Index i = 0; i < latents.rows(); ++i) {
    for (Eigen::Index j = 0; j < latents.rows(); ++j) {
      sim(i, j) = cosine_similarity(row_span(latents, i), row_span(latents, j)) / tau;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < rows; ++m) {
      if (m != i) shift = std::max(shift, sim(ii, static_cast<Eigen::Index>(m)));
    }
    double denom = 0.0;
    for (std::size_t m = 0; m < rows; ++m) {
      if (m != i) denom += std::exp(sim(ii, static_cast<Eigen::Index>(m)) - shift);
    }
    total += shift + std::log(denom) - sim(ii, static_cast<Eigen::Index>(partner[i]));
  }
  return total / static_cast<double>(rows);
}

double pairwise_ranking_loss(std::span<const double> z_a, std::span<const double> z_b, int y,
                             double gamma) {
  if (y != 0 && y != 1) throw ConfigError("pairwise_ranking_loss: y must be 0 or 1");
  if (!(gamma >= 0.0)) throw ConfigError("pairwise_ranking_loss: gamma must be >= 0");
  const double d = euclidean(z_a, z_b);
  return y == 1 ? d : std::max(0.0, gamma - d);
}

const char* to_string(TripletRegime regime) {
  switch (regime) {
    case TripletRegime::easy:
      return "easy";
    case TripletRegime::semi_hard:
      return "semi_hard";
    case TripletRegime::hard:
      return "hard";
  }
  return "unknown";
}

TripletResult triplet_ranking_loss(std::span<const double> anchor,
                                   std::span<const double> positive,
                                   std::span<const double> negative, double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("triplet_ranking_loss: gamma must be >= 0");
  const double d_pos = euclidean(anchor, positive);
  const double d_neg = euclidean(anchor, negative);
  TripletResult result;
  result.loss = std::max(0.0, gamma + d_pos - d_neg);
  if (result.loss == 0.0) {
    result.regime = TripletRegime::easy;
  } else if (result.loss > gamma) {
    result.regime = TripletRegime::hard;
  } else {
    result.regime = TripletRegime::semi_hard;
  }
  return result;
}

}  // namespace oodreg
