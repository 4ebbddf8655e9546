#include "conxgnn/hypergraph.hpp"

#include <stdexcept>
#include <string>

#include "conxgnn/inception_graph.hpp"
#include "conxgnn/init.hpp"

namespace conxgnn {

HypergraphStructure build_incidence(Index num_utterances) {
  if (num_utterances < 1) throw std::invalid_argument("build_incidence: need at least one utterance");
  HypergraphStructure hg;
  hg.num_utterances = num_utterances;
  hg.incidence = Matrix::Zero(3 * num_utterances, 3 + num_utterances);
  for (Index i = 0; i < num_utterances; ++i) {
    for (Modality m : kModalities) {
      const Index v = node_id(i, m);
      hg.incidence(v, static_cast<Index>(m)) = 1.0;
      hg.incidence(v, 3 + i) = 1.0;
    }
  }
  hg.weights = Vector::Ones(3 + num_utterances);
  return hg;
}

HypergraphParams init_hypergraph(Index hidden, int num_layers, Index max_utterances, std::mt19937_64& rng) {
  HypergraphParams p;
  p.edge_weights = constant_parameter("hm.edge_weights", 1, 3 + max_utterances, 1.0);
  for (int l = 0; l < num_layers; ++l) {
    p.layers.push_back(xavier_parameter("hm.layer" + std::to_string(l), hidden, hidden, rng));
  }
  return p;
}

Var hyperedge_weights(Tape& tape, const HypergraphParams& params, Index num_utterances) {
  if (num_utterances > params.max_utterances()) {
    throw std::invalid_argument("conversation of " + std::to_string(num_utterances) +
                                " utterances exceeds the hypergraph capacity of " +
                                std::to_string(params.max_utterances()));
  }
  return slice_cols(tape.param(params.edge_weights), 0, 3 + num_utterances);
}

Var hypergraph_preactivation(const Var& nodes, const HypergraphStructure& hg, const Var& weights,
                             const Var& theta) {
  Tape& tape = nodes.tape();
  const Matrix& h = hg.incidence;
  if (nodes.rows() != h.rows()) throw std::invalid_argument("hypergraph_conv: node count mismatch");
  if (weights.rows() != 1 || weights.cols() != h.cols()) {
    throw std::invalid_argument("hypergraph_conv: expected 1x" + std::to_string(h.cols()) + " edge weights");
  }
  const Vector node_degree = h * weights.value().transpose();
  for (Index v = 0; v < node_degree.size(); ++v) {
    if (!(node_degree(v) > 0.0)) {
      throw std::domain_error("hypergraph_conv: weighted degree of node " + std::to_string(v) +
                              " is not positive (" + std::to_string(node_degree(v)) + ")");
    }
  }
  const Vector edge_degree = h.colwise().sum().transpose();
  Var weighted_incidence = scale_cols(tape.constant(h), weights);
  Var inv_degree = reciprocal(weighted_incidence * tape.constant(Matrix::Ones(h.cols(), 1)));
  Var gather = tape.constant(edge_degree.cwiseInverse().asDiagonal() * h.transpose());
  Var propagated = scale_rows(weighted_incidence * (gather * nodes), inv_degree);
  return propagated * theta;
}

Var hypergraph_conv(const Var& nodes, const HypergraphStructure& hg, const Var& weights, const Var& theta) {
  return relu(hypergraph_preactivation(nodes, hg, weights, theta));
}

ModalityVars hm_forward(Tape& tape, const ModalityVars& reps, const HypergraphStructure& hg,
                        const HypergraphParams& params) {
  if (reps.text.rows() != hg.num_utterances) throw std::invalid_argument("hm_forward: structure built for another length");
  Var weights = hyperedge_weights(tape, params, hg.num_utterances);
  Var q = interleave_nodes(reps);
  for (const auto& theta : params.layers) q = hypergraph_conv(q, hg, weights, tape.param(theta));
  return deinterleave_nodes(q);
}

}  // namespace conxgnn
