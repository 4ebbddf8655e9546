#pragma once

// Modality/utterance hypergraph: 3L nodes, 3 + L hyperedges. Hyperedges 0..2
// hold every node of modality t, a, v; hyperedge 3 + i holds the three nodes
// of utterance i. Node layout matches inception_graph.hpp.

#include <random>
#include <vector>

#include "conxgnn/encoder.hpp"
#include "conxgnn/tensor.hpp"

namespace conxgnn {

struct HypergraphStructure {
  Index num_utterances = 0;
  /// 3L x (3 + L), binary.
  Matrix incidence;
  /// omega(e), length 3 + L.
  Vector weights;

  Index num_nodes() const { return incidence.rows(); }
  Index num_edges() const { return incidence.cols(); }
};

/// Incidence for L utterances with all hyperedge weights set to 1.
HypergraphStructure build_incidence(Index num_utterances);

/// D^-1 H W_e B^-1 H^T with D the omega-weighted node degree and B the
/// hyperedge cardinality.
template <typename DerivedH, typename DerivedW>
Matrix propagation_operator(const Eigen::MatrixBase<DerivedH>& incidence,
                            const Eigen::MatrixBase<DerivedW>& weights) {
  const Vector w = weights.derived().reshaped();
  const Vector node_degree = incidence * w;
  const Vector edge_degree = incidence.colwise().sum().transpose();
  return node_degree.cwiseInverse().asDiagonal() * incidence * w.asDiagonal() *
         edge_degree.cwiseInverse().asDiagonal() * incidence.transpose();
}

struct HypergraphParams {
  /// 1 x (3 + max_utterances). Entry e < 3 weights modality hyperedge e;
  /// entry 3 + i weights the hyperedge of the utterance at position i.
  Parameter edge_weights;
  /// One d_h x d_h transform per convolution layer.
  std::vector<Parameter> layers;

  Index max_utterances() const { return edge_weights.value.cols() - 3; }

  template <typename F>
  void visit(F&& f) {
    f(edge_weights);
    for (auto& p : layers) f(p);
  }
};

HypergraphParams init_hypergraph(Index hidden, int num_layers, Index max_utterances, std::mt19937_64& rng);

/// The 1 x (3 + L) slice of the learnable weights used for a conversation.
Var hyperedge_weights(Tape& tape, const HypergraphParams& params, Index num_utterances);

/// D^-1 H W_e B^-1 H^T Q Theta (no activation). Throws std::domain_error if
/// any weighted node degree is not positive.
Var hypergraph_preactivation(const Var& nodes, const HypergraphStructure& hg, const Var& weights,
                             const Var& theta);

/// ReLU of hypergraph_preactivation.
Var hypergraph_conv(const Var& nodes, const HypergraphStructure& hg, const Var& weights, const Var& theta);

/// Stacked convolutions starting from the encoder representations.
ModalityVars hm_forward(Tape& tape, const ModalityVars& reps, const HypergraphStructure& hg,
                        const HypergraphParams& params);

}  // namespace conxgnn
