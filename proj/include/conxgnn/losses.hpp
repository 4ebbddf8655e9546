#pragma once

// Class-balanced objectives. Per-class weights follow the effective number
// of samples: w_c = (1 - beta) / (1 - beta^n_c).

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "conxgnn/tensor.hpp"

namespace conxgnn {

/// Probabilities are clamped to this floor before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

template <typename Scalar>
Scalar cb_weight(std::size_t count, Scalar beta) {
  if (count == 0) throw std::invalid_argument("cb_weight: class has no samples");
  if (!(beta >= Scalar(0) && beta < Scalar(1))) throw std::invalid_argument("cb_weight: beta must lie in [0, 1)");
  if (beta == Scalar(0)) return Scalar(1);
  // 1 - beta^n computed as -expm1(n log beta) to stay accurate for beta near 1.
  const Scalar denom = -std::expm1(static_cast<Scalar>(count) * std::log(beta));
  return (Scalar(1) - beta) / denom;
}

struct ClassWeights {
  double beta = 0.0;
  std::vector<std::size_t> counts;
  /// Zero for classes with no training samples.
  std::vector<double> weights;

  static ClassWeights from_counts(std::vector<std::size_t> counts, double beta);
  /// All classes weighted 1.
  static ClassWeights uniform(std::size_t num_classes);

  double operator[](std::size_t c) const { return weights.at(c); }
  std::size_t size() const { return weights.size(); }
};

struct LossConfig {
  double mu = 0.8;
  double temperature = 0.07;

  void validate() const;
};

/// Model outputs for one dialogue of a batch.
struct DialogueOutputs {
  Var probs;       // L x C
  Var embeddings;  // L x d_z
  std::vector<std::size_t> labels;
};

/// Sum over utterances of w_c(j) * log p_j[label_j], negated. Not normalized.
Var cbce_sum(const Var& probs, std::span<const std::size_t> labels, const ClassWeights& weights);

/// Per-anchor contributions (L x 1) of the focal contrastive objective for
/// one dialogue: -(w_c(j) / |P_j|) sum_{k in P_j} (1 - t_jk) log t_jk, where
/// t_jk is the softmax of z_j . z_k / temperature over k != j and P_j are
/// the other utterances sharing j's label. Rows of `embeddings` are
/// L2-normalized first. Anchors with no positive contribute 0.
Var cbfc_anchor_terms(const Var& embeddings, std::span<const std::size_t> labels, const ClassWeights& weights,
                      double temperature);

/// Batch objectives, normalized by the total utterance count.
Var cbce_loss(std::span<const DialogueOutputs> batch, const ClassWeights& weights);
Var cbfc_loss(std::span<const DialogueOutputs> batch, const ClassWeights& weights, double temperature);

/// cbce + mu * cbfc
Var total_loss(const Var& cbce, const Var& cbfc, double mu);
double total_loss(double cbce, double cbfc, double mu);

}  // namespace conxgnn
