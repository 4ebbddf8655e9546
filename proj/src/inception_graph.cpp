#include "conxgnn/inception_graph.hpp"

#include <stdexcept>

#include "conxgnn/init.hpp"

namespace conxgnn {

namespace {

constexpr int kInterBase = 0;
constexpr int kPastBase = 6;
constexpr int kFutureBase = 9;

int modality_index(Modality m) { return static_cast<int>(m); }

// Ordered pairs (from, to) with from != to, in a fixed order.
constexpr std::array<std::pair<int, int>, 6> kInterPairs = {
    {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}}};

}  // namespace

int relation_index(const RelationType& r) {
  switch (r.kind) {
    case RelationKind::inter: {
      const int from = modality_index(r.from);
      const int to = modality_index(r.to);
      for (int k = 0; k < 6; ++k) {
        if (kInterPairs[static_cast<std::size_t>(k)] == std::pair{from, to}) return kInterBase + k;
      }
      throw std::invalid_argument("inter relation needs two distinct modalities");
    }
    case RelationKind::intra_past:
      if (r.from != r.to) throw std::invalid_argument("intra relation needs a single modality");
      return kPastBase + modality_index(r.from);
    case RelationKind::intra_future:
      if (r.from != r.to) throw std::invalid_argument("intra relation needs a single modality");
      return kFutureBase + modality_index(r.from);
  }
  throw std::invalid_argument("unknown relation kind");
}

RelationType relation_type(int index) {
  if (index < 0 || index >= kNumRelations) throw std::out_of_range("relation index out of range");
  if (index < kPastBase) {
    const auto [from, to] = kInterPairs[static_cast<std::size_t>(index)];
    return {RelationKind::inter, kModalities[from], kModalities[to]};
  }
  if (index < kFutureBase) {
    const Modality m = kModalities[index - kPastBase];
    return {RelationKind::intra_past, m, m};
  }
  const Modality m = kModalities[index - kFutureBase];
  return {RelationKind::intra_future, m, m};
}

std::string relation_name(int index) {
  const RelationType r = relation_type(index);
  switch (r.kind) {
    case RelationKind::inter:
      return std::string("inter_") + modality_name(r.from) + "_" + modality_name(r.to);
    case RelationKind::intra_past: return std::string("past_") + modality_name(r.from);
    case RelationKind::intra_future: return std::string("future_") + modality_name(r.from);
  }
  return "?";
}

// ---------------------------------------------------------------------------

RelationalGraph::RelationalGraph(Index num_utterances, std::vector<Edge> edges)
    : num_utterances_(num_utterances), edges_(std::move(edges)) {
  const Index n = num_nodes();
  for (int r = 0; r < kNumRelations; ++r) {
    adjacency_[static_cast<std::size_t>(r)] = Matrix::Zero(n, n);
    relation_degree_[static_cast<std::size_t>(r)] = Vector::Zero(n);
  }
  degree_ = Vector::Zero(n);
  neighbourhood_ = Matrix::Zero(n, n);
  for (const Edge& e : edges_) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) throw std::out_of_range("edge endpoint out of range");
    if (e.relation < 0 || e.relation >= kNumRelations) throw std::out_of_range("edge relation out of range");
    const auto r = static_cast<std::size_t>(e.relation);
    adjacency_[r](e.dst, e.src) += e.weight;
    relation_degree_[r](e.dst) += 1.0;
    ++relation_edges_[r];
    degree_(e.dst) += 1.0;
    neighbourhood_(e.dst, e.src) = 1.0;
  }
}

Matrix interleave_nodes(const ModalityMatrices& reps) {
  const Index len = reps.text.rows();
  Matrix out(3 * len, reps.text.cols());
  for (Modality m : kModalities) {
    if (reps[m].rows() != len || reps[m].cols() != reps.text.cols()) {
      throw std::invalid_argument("interleave_nodes: modality shapes differ");
    }
    for (Index i = 0; i < len; ++i) out.row(node_id(i, m)) = reps[m].row(i);
  }
  return out;
}

Var interleave_nodes(const ModalityVars& reps) {
  const Index len = reps.text.rows();
  const std::array<Var, 3> parts = {reps.text, reps.audio, reps.visual};
  Var stacked = concat_rows(parts);  // modality-major
  std::vector<Index> order(static_cast<std::size_t>(3 * len));
  for (Index i = 0; i < len; ++i) {
    for (Modality m : kModalities) {
      order[static_cast<std::size_t>(node_id(i, m))] = static_cast<Index>(m) * len + i;
    }
  }
  return gather_rows(stacked, order);
}

ModalityVars deinterleave_nodes(const Var& nodes) {
  if (nodes.rows() % 3 != 0) throw std::invalid_argument("deinterleave_nodes: row count not a multiple of 3");
  const Index len = nodes.rows() / 3;
  ModalityVars out;
  for (Modality m : kModalities) {
    std::vector<Index> rows(static_cast<std::size_t>(len));
    for (Index i = 0; i < len; ++i) rows[static_cast<std::size_t>(i)] = node_id(i, m);
    out[m] = gather_rows(nodes, rows);
  }
  return out;
}

RelationalGraph build_graph(const ModalityMatrices& reps, const Window& window) {
  if (window.past < 1 || window.future < 1) throw std::invalid_argument("window sizes must be >= 1");
  const Index len = reps.text.rows();
  if (len == 0) throw std::invalid_argument("build_graph: conversation has no utterances");
  const Matrix nodes = interleave_nodes(reps);
  auto weight = [&](Index a, Index b) { return angular_edge_weight(nodes.row(a), nodes.row(b)); };

  std::vector<Edge> edges;
  for (Index i = 0; i < len; ++i) {
    for (Modality from : kModalities) {
      for (Modality to : kModalities) {
        if (from == to) continue;
        const Index src = node_id(i, from);
        const Index dst = node_id(i, to);
        edges.push_back({src, dst, relation_index({RelationKind::inter, from, to}), weight(src, dst)});
      }
    }
  }
  for (Modality m : kModalities) {
    const int past = relation_index({RelationKind::intra_past, m, m});
    const int future = relation_index({RelationKind::intra_future, m, m});
    for (Index i = 0; i < len; ++i) {
      const Index dst = node_id(i, m);
      for (Index j = std::max<Index>(0, i - window.past + 1); j < i; ++j) {
        edges.push_back({node_id(j, m), dst, past, weight(node_id(j, m), dst)});
      }
      for (Index j = i + 1; j < std::min<Index>(len, i + window.future); ++j) {
        edges.push_back({node_id(j, m), dst, future, weight(node_id(j, m), dst)});
      }
    }
  }
  return RelationalGraph(len, std::move(edges));
}

std::vector<RelationalGraph> build_graphs(const ModalityMatrices& reps, std::span<const Window> windows) {
  std::vector<RelationalGraph> graphs;
  graphs.reserve(windows.size());
  for (const Window& w : windows) graphs.push_back(build_graph(reps, w));
  return graphs;
}

// ---------------------------------------------------------------------------

IgmParams init_igm(Index hidden, std::size_t num_branches, int num_layers, int heads, std::mt19937_64& rng) {
  if (heads <= 0 || hidden % heads != 0) {
    throw std::invalid_argument("hidden size must be divisible by the graph head count");
  }
  IgmParams p;
  for (std::size_t b = 0; b < num_branches; ++b) {
    const std::string pre = "igm.branch" + std::to_string(b) + ".";
    IgmBranchParams branch;
    for (int l = 0; l < num_layers; ++l) {
      KgnnLayerParams layer;
      for (int r = 0; r < kNumRelations; ++r) {
        const std::string name = pre + "kgnn" + std::to_string(l) + "." + relation_name(r);
        layer.self_weight.push_back(xavier_parameter(name + ".self", hidden, hidden, rng));
        layer.neighbour_weight.push_back(xavier_parameter(name + ".neighbour", hidden, hidden, rng));
      }
      branch.layers.push_back(std::move(layer));
    }
    branch.transformer.heads = heads;
    branch.transformer.skip = xavier_parameter(pre + "transformer.skip", hidden, hidden, rng);
    branch.transformer.value = xavier_parameter(pre + "transformer.value", hidden, hidden, rng);
    branch.transformer.query = xavier_parameter(pre + "transformer.query", hidden, hidden, rng);
    branch.transformer.key = xavier_parameter(pre + "transformer.key", hidden, hidden, rng);
    p.branches.push_back(std::move(branch));
  }
  return p;
}

Var kgnn_layer(Tape& tape, const RelationalGraph& graph, const Var& nodes, const KgnnLayerParams& params) {
  if (nodes.rows() != graph.num_nodes()) throw std::invalid_argument("kgnn_layer: node count mismatch");
  if (params.self_weight.size() != kNumRelations || params.neighbour_weight.size() != kNumRelations) {
    throw std::invalid_argument("kgnn_layer: expected one weight pair per relation");
  }
  const Vector& deg = graph.degree();
  if ((deg.array() <= 0.0).any()) throw std::logic_error("kgnn_layer: isolated node");
  const Vector inv_deg = deg.cwiseInverse();

  Var out;
  for (int r = 0; r < kNumRelations; ++r) {
    if (!graph.has_relation(r)) continue;
    const auto ri = static_cast<std::size_t>(r);
    const Vector active = (graph.relation_degree(r).array() > 0.0).cast<double>();
    Var self_scale = tape.constant(active.cwiseProduct(inv_deg));
    Var propagate = tape.constant(inv_deg.asDiagonal() * graph.adjacency(r));
    Var term = matmul_transposed(scale_rows(nodes, self_scale), tape.param(params.self_weight[ri])) +
               matmul_transposed(propagate * nodes, tape.param(params.neighbour_weight[ri]));
    out = out.valid() ? out + term : term;
  }
  return out;
}

Var graph_transformer_layer(Tape& tape, const RelationalGraph& graph, const Var& nodes,
                            const GraphTransformerParams& params) {
  if (nodes.rows() != graph.num_nodes()) throw std::invalid_argument("graph_transformer_layer: node count mismatch");
  const Index d = params.skip.value.rows();
  if (params.heads <= 0 || d % params.heads != 0) {
    throw std::invalid_argument("graph_transformer_layer: hidden size not divisible by head count");
  }
  const Index dh = d / params.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Var q = matmul_transposed(nodes, tape.param(params.query));
  Var k = matmul_transposed(nodes, tape.param(params.key));
  Var v = matmul_transposed(nodes, tape.param(params.value));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(params.heads));
  for (int h = 0; h < params.heads; ++h) {
    Var scores = scale * matmul_transposed(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh));
    Var alpha = masked_softmax_rows(scores, graph.neighbourhood_mask());
    heads.push_back(alpha * slice_cols(v, h * dh, dh));
  }
  Var attended = params.heads == 1 ? heads.front() : concat_cols(heads);
  return matmul_transposed(nodes, tape.param(params.skip)) + attended;
}

Var igm_branch(Tape& tape, const RelationalGraph& graph, const Var& nodes, const IgmBranchParams& params) {
  Var g = nodes;
  for (const auto& layer : params.layers) g = kgnn_layer(tape, graph, g, layer);
  return graph_transformer_layer(tape, graph, g, params.transformer);
}

ModalityVars igm_forward(Tape& tape, const ModalityVars& reps, std::span<const RelationalGraph> graphs,
                         const IgmParams& params) {
  if (graphs.empty()) throw std::invalid_argument("igm_forward: at least one window is required");
  if (graphs.size() != params.branches.size()) {
    throw std::invalid_argument("igm_forward: " + std::to_string(graphs.size()) + " graphs for " +
                                std::to_string(params.branches.size()) + " branches");
  }
  Var nodes = interleave_nodes(reps);
  Var total;
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    Var o = igm_branch(tape, graphs[b], nodes, params.branches[b]);
    total = total.valid() ? total + o : o;
  }
  if (graphs.size() > 1) total = (1.0 / static_cast<double>(graphs.size())) * total;
  return deinterleave_nodes(total);
}

}  // namespace conxgnn
