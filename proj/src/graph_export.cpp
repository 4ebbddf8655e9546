#include "conxgnn/graph_export.hpp"

#include <iomanip>
#include <sstream>

namespace conxgnn {

using nlohmann::json;

json graph_to_json(const RelationalGraph& graph) {
  json nodes = json::array();
  for (Index i = 0; i < graph.num_utterances(); ++i) {
    for (Modality m : kModalities) {
      nodes.push_back({{"id", node_id(i, m)}, {"utterance", i}, {"modality", modality_name(m)}});
    }
  }
  json edges = json::array();
  for (const Edge& e : graph.edges()) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"relation", relation_name(e.relation)}, {"weight", e.weight}});
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

std::string graph_to_dot(const RelationalGraph& graph, const std::string& name) {
  std::ostringstream out;
  out << "digraph \"" << name << "\" {\n  rankdir=LR;\n";
  for (Index i = 0; i < graph.num_utterances(); ++i) {
    out << "  subgraph cluster_u" << i << " {\n    label=\"u" << i << "\";\n";
    for (Modality m : kModalities) {
      out << "    n" << node_id(i, m) << " [label=\"" << modality_name(m) << i << "\"];\n";
    }
    out << "  }\n";
  }
  out << std::setprecision(4);
  for (const Edge& e : graph.edges()) {
    out << "  n" << e.src << " -> n" << e.dst << " [label=\"" << relation_name(e.relation) << " " << e.weight
        << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

json incidence_to_json(const HypergraphStructure& structure) {
  const Matrix& h = structure.incidence;
  json entries = json::array();
  for (Index r = 0; r < h.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < h.cols(); ++c) row.push_back(static_cast<int>(h(r, c)));
    entries.push_back(std::move(row));
  }
  json weights = json::array();
  for (Index e = 0; e < structure.weights.size(); ++e) weights.push_back(structure.weights[e]);
  return {{"rows", h.rows()}, {"cols", h.cols()}, {"entries", std::move(entries)}, {"edge_weights", weights}};
}

}  // namespace conxgnn
