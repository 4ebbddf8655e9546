#pragma once

// Multi-window relational conversation graphs and the message passing run
// on them: relational k-GNN layers followed by a graph-transformer layer per
// branch, with branch outputs averaged.
//
// Node layout: utterance i, modality m  ->  3 * i + index(m), with
// t, a, v -> 0, 1, 2.

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conxgnn/encoder.hpp"
#include "conxgnn/tensor.hpp"

namespace conxgnn {

inline constexpr int kNumRelations = 12;

enum class RelationKind { inter, intra_past, intra_future };

/// For intra relations `from == to`.
struct RelationType {
  RelationKind kind;
  Modality from;
  Modality to;

  bool operator==(const RelationType&) const = default;
};

/// Indices 0..5 are the ordered inter pairs, 6..8 intra_past(t,a,v),
/// 9..11 intra_future(t,a,v).
int relation_index(const RelationType& r);
RelationType relation_type(int index);
std::string relation_name(int index);

inline Index node_id(Index utterance, Modality m) { return 3 * utterance + static_cast<Index>(m); }

struct Window {
  int past = 1;
  int future = 1;

  bool operator==(const Window&) const = default;
};

struct Edge {
  Index src;
  Index dst;
  int relation;
  double weight;
};

/// Angular similarity 1 - arccos(cos(u, v)) / pi, in [0, 1]. The cosine is
/// clamped to [-1, 1]; a zero vector has similarity 0 with anything.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar angular_edge_weight(const Eigen::MatrixBase<DerivedA>& u,
                                              const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  Scalar cosine = 0;
  if (nu > 0 && nv > 0) cosine = u.dot(v) / (nu * nv);
  cosine = std::clamp<Scalar>(cosine, Scalar(-1), Scalar(1));
  return Scalar(1) - std::acos(cosine) / std::numbers::pi_v<Scalar>;
}

class RelationalGraph {
 public:
  RelationalGraph() = default;
  RelationalGraph(Index num_utterances, std::vector<Edge> edges);

  Index num_utterances() const { return num_utterances_; }
  Index num_nodes() const { return 3 * num_utterances_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// adjacency(r)(i, j) = A_ji for an edge j -> i of relation r.
  const Matrix& adjacency(int relation) const { return adjacency_[static_cast<std::size_t>(relation)]; }
  /// Number of in-neighbours of each node under relation r (3L x 1).
  const Vector& relation_degree(int relation) const { return relation_degree_[static_cast<std::size_t>(relation)]; }
  /// |N(i)| summed over relations.
  const Vector& degree() const { return degree_; }
  /// 1 where j is an in-neighbour of i under any relation.
  const Matrix& neighbourhood_mask() const { return neighbourhood_; }
  bool has_relation(int relation) const { return relation_edges_[static_cast<std::size_t>(relation)] > 0; }

 private:
  Index num_utterances_ = 0;
  std::vector<Edge> edges_;
  std::array<Matrix, kNumRelations> adjacency_;
  std::array<Vector, kNumRelations> relation_degree_;
  std::array<std::size_t, kNumRelations> relation_edges_{};
  Vector degree_;
  Matrix neighbourhood_;
};

/// Interleaves per-modality L x d matrices into the 3L x d node layout.
Matrix interleave_nodes(const ModalityMatrices& reps);
Var interleave_nodes(const ModalityVars& reps);
ModalityVars deinterleave_nodes(const Var& nodes);

/// Edges from the window predicates (strict on both sides); weights from
/// the angular similarity of the endpoint representations.
RelationalGraph build_graph(const ModalityMatrices& reps, const Window& window);

struct KgnnLayerParams {
  /// Self and neighbour transforms, one pair per relation (d_h x d_h).
  std::vector<Parameter> self_weight;
  std::vector<Parameter> neighbour_weight;

  template <typename F>
  void visit(F&& f) {
    for (auto& p : self_weight) f(p);
    for (auto& p : neighbour_weight) f(p);
  }
};

struct GraphTransformerParams {
  int heads = 1;
  Parameter skip;    // applied to the node itself
  Parameter value;   // applied to attended neighbours
  Parameter query;
  Parameter key;

  template <typename F>
  void visit(F&& f) {
    f(skip);
    f(value);
    f(query);
    f(key);
  }
};

struct IgmBranchParams {
  std::vector<KgnnLayerParams> layers;
  GraphTransformerParams transformer;

  template <typename F>
  void visit(F&& f) {
    for (auto& l : layers) l.visit(f);
    transformer.visit(f);
  }
};

struct IgmParams {
  std::vector<IgmBranchParams> branches;

  template <typename F>
  void visit(F&& f) {
    for (auto& b : branches) b.visit(f);
  }
};

IgmParams init_igm(Index hidden, std::size_t num_branches, int num_layers, int heads, std::mt19937_64& rng);

/// g_i <- (1/|N(i)|) sum_r (W0_r g_i + W1_r sum_{j in N_r(i)} A_ji g_j), where
/// r ranges over relations with at least one in-neighbour at i.
Var kgnn_layer(Tape& tape, const RelationalGraph& graph, const Var& nodes, const KgnnLayerParams& params);

/// o_i = concat_h [W2_h g_i + sum_{j in N(i)} alpha^h_ij W3_h g_j], with
/// alpha^h_i = softmax_j((W4_h g_i)^T (W5_h g_j) / sqrt(d_h)) over the union
/// neighbourhood. W*_h are the h-th row blocks of the full matrices.
Var graph_transformer_layer(Tape& tape, const RelationalGraph& graph, const Var& nodes,
                            const GraphTransformerParams& params);

/// One branch: the k-GNN stack then the graph transformer, on 3L x d nodes.
Var igm_branch(Tape& tape, const RelationalGraph& graph, const Var& nodes, const IgmBranchParams& params);

std::vector<RelationalGraph> build_graphs(const ModalityMatrices& reps, std::span<const Window> windows);

/// Runs each branch on its own graph and averages the per-modality outputs.
ModalityVars igm_forward(Tape& tape, const ModalityVars& reps, std::span<const RelationalGraph> graphs,
                         const IgmParams& params);

}  // namespace conxgnn
