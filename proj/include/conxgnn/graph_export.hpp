#pragma once

#include <string>

#include <json.hpp>

#include "conxgnn/hypergraph.hpp"
#include "conxgnn/inception_graph.hpp"

namespace conxgnn {

/// {nodes: [{id, utterance, modality}], edges: [{src, dst, relation, weight}]}
nlohmann::json graph_to_json(const RelationalGraph& graph);
/// Nodes grouped by utterance; edges labelled with their relation name.
std::string graph_to_dot(const RelationalGraph& graph, const std::string& name = "conversation");
/// {rows, cols, entries: [[...], ...]} with weights alongside.
nlohmann::json incidence_to_json(const HypergraphStructure& structure);

}  // namespace conxgnn
