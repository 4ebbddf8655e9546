#include "conxgnn/losses.hpp"

#include <string>

namespace conxgnn {

ClassWeights ClassWeights::from_counts(std::vector<std::size_t> counts, double beta) {
  ClassWeights w;
  w.beta = beta;
  w.weights.resize(counts.size(), 0.0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) w.weights[c] = cb_weight(counts[c], beta);
  }
  w.counts = std::move(counts);
  return w;
}

ClassWeights ClassWeights::uniform(std::size_t num_classes) {
  ClassWeights w;
  w.counts.assign(num_classes, 0);
  w.weights.assign(num_classes, 1.0);
  return w;
}

void LossConfig::validate() const {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("mu must lie in (0, 1]");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

namespace {

void check_labels(std::span<const std::size_t> labels, Index rows, const ClassWeights& weights) {
  if (static_cast<Index>(labels.size()) != rows) {
    throw std::invalid_argument("expected one label per row, got " + std::to_string(labels.size()) + " for " +
                                std::to_string(rows));
  }
  for (std::size_t label : labels) {
    if (label >= weights.size()) {
      throw std::out_of_range("label " + std::to_string(label) + " out of range for " +
                              std::to_string(weights.size()) + " classes");
    }
  }
}

}  // namespace

Var cbce_sum(const Var& probs, std::span<const std::size_t> labels, const ClassWeights& weights) {
  check_labels(labels, probs.rows(), weights);
  if (probs.cols() != static_cast<Index>(weights.size())) {
    throw std::invalid_argument("cbce: probability width does not match the class count");
  }
  Matrix target = Matrix::Zero(probs.rows(), probs.cols());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    target(static_cast<Index>(j), static_cast<Index>(labels[j])) = weights[labels[j]];
  }
  Tape& tape = probs.tape();
  return -sum(cwise_product(tape.constant(std::move(target)), log(probs, kProbabilityFloor)));
}

Var cbfc_anchor_terms(const Var& embeddings, std::span<const std::size_t> labels, const ClassWeights& weights,
                      double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("cbfc: temperature must be positive");
  check_labels(labels, embeddings.rows(), weights);
  Tape& tape = embeddings.tape();
  const Index len = embeddings.rows();

  Matrix others = Matrix::Ones(len, len);
  others.diagonal().setZero();
  Matrix coef = Matrix::Zero(len, len);
  for (Index j = 0; j < len; ++j) {
    std::vector<Index> positives;
    for (Index k = 0; k < len; ++k) {
      if (k != j && labels[static_cast<std::size_t>(k)] == labels[static_cast<std::size_t>(j)]) positives.push_back(k);
    }
    if (positives.empty()) continue;
    const double c = weights[labels[static_cast<std::size_t>(j)]] / static_cast<double>(positives.size());
    for (Index k : positives) coef(j, k) = c;
  }

  Var z = l2_normalize_rows(embeddings, 1e-12);
  Var t = masked_softmax_rows((1.0 / temperature) * matmul_transposed(z, z), others);
  Var focal = cwise_product(tape.constant(Matrix::Ones(len, len)) - t, log(t, kProbabilityFloor));
  return -(cwise_product(tape.constant(std::move(coef)), focal) * tape.constant(Matrix::Ones(len, 1)));
}

namespace {

double total_utterances(std::span<const DialogueOutputs> batch) {
  std::size_t n = 0;
  for (const auto& d : batch) n += d.labels.size();
  if (n == 0) throw std::invalid_argument("loss over an empty batch");
  return static_cast<double>(n);
}

}  // namespace

Var cbce_loss(std::span<const DialogueOutputs> batch, const ClassWeights& weights) {
  const double n = total_utterances(batch);
  Var total;
  for (const auto& d : batch) {
    Var s = cbce_sum(d.probs, d.labels, weights);
    total = total.valid() ? total + s : s;
  }
  return (1.0 / n) * total;
}

Var cbfc_loss(std::span<const DialogueOutputs> batch, const ClassWeights& weights, double temperature) {
  const double n = total_utterances(batch);
  Var total;
  for (const auto& d : batch) {
    Var s = sum(cbfc_anchor_terms(d.embeddings, d.labels, weights, temperature));
    total = total.valid() ? total + s : s;
  }
  return (1.0 / n) * total;
}

Var total_loss(const Var& cbce, const Var& cbfc, double mu) { return cbce + mu * cbfc; }

double total_loss(double cbce, double cbfc, double mu) { return cbce + mu * cbfc; }

}  // namespace conxgnn
