#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conxgnn/data.hpp"
#include "conxgnn/encoder.hpp"
#include "conxgnn/fusion.hpp"
#include "conxgnn/hypergraph.hpp"
#include "conxgnn/inception_graph.hpp"

namespace conxgnn {

/// Component switches for ablation runs.
struct Ablations {
  bool disable_igm = false;
  bool disable_hm = false;
  bool disable_crossmodal = false;
  bool disable_reweight = false;

  bool operator==(const Ablations&) const = default;
};

struct ModelConfig {
  FeatureDims dims;
  std::size_t num_speakers = 1;
  std::size_t num_classes = 2;
  Index hidden = 64;
  int text_layers = 2;
  int text_heads = 4;
  int graph_heads = 4;
  /// 0 selects the default: d_att = d_h, d_z = d_h / 2.
  Index attention_dim = 0;
  Index embedding_dim = 0;
  std::vector<Window> windows{{10, 9}, {5, 3}, {3, 2}};
  int kgnn_layers = 2;
  int hypergraph_layers = 4;
  Index max_utterances = 256;
  Ablations ablations;

  Index resolved_attention_dim() const { return attention_dim > 0 ? attention_dim : hidden; }
  Index resolved_embedding_dim() const { return embedding_dim > 0 ? embedding_dim : std::max<Index>(1, hidden / 2); }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Model configuration sized for a dataset.
ModelConfig model_config_for(const Dataset& dataset);

struct ForwardResult {
  ModalityVars reps;
  std::vector<RelationalGraph> graphs;
  Var probs;
  Var embeddings;
  std::vector<std::size_t> predictions;
};

class ConxGnn {
 public:
  ConxGnn(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Builds the relational graphs from the encoder output of this forward.
  ForwardResult forward(Tape& tape, const Conversation& conv) const;
  /// Uses the given graphs (one per window) instead of building them.
  ForwardResult forward(Tape& tape, const Conversation& conv, std::span<const RelationalGraph> graphs) const;

  /// Predicted class per utterance, without recording gradients.
  std::vector<std::size_t> predict(const Conversation& conv) const;

  EncoderParams& encoder() { return encoder_; }
  const EncoderParams& encoder() const { return encoder_; }
  IgmParams& igm() { return igm_; }
  const IgmParams& igm() const { return igm_; }
  HypergraphParams& hypergraph() { return hypergraph_; }
  const HypergraphParams& hypergraph() const { return hypergraph_; }
  FusionParams& fusion() { return fusion_; }
  const FusionParams& fusion() const { return fusion_; }

  /// Visits every trainable parameter in a fixed order.
  template <typename F>
  void visit(F&& f) {
    encoder_.visit(f);
    igm_.visit(f);
    hypergraph_.visit(f);
    fusion_.visit(f);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<ConxGnn*>(this)->visit([&f](Parameter& p) { f(static_cast<const Parameter&>(p)); });
  }

  std::size_t parameter_count() const;

 private:
  ForwardResult forward_impl(Tape& tape, const Conversation& conv,
                             std::optional<std::span<const RelationalGraph>> graphs) const;

  ModelConfig config_;
  EncoderParams encoder_;
  IgmParams igm_;
  HypergraphParams hypergraph_;
  FusionParams fusion_;
};

}  // namespace conxgnn
