#include "conxgnn/model.hpp"

#include <stdexcept>

namespace conxgnn {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (dims.text == 0 || dims.audio == 0 || dims.visual == 0) fail("feature dimensions must be positive");
  if (num_speakers == 0) fail("num_speakers must be positive");
  if (num_classes < 2) fail("at least two classes are required");
  if (hidden <= 0) fail("hidden size must be positive");
  if (text_heads <= 0 || hidden % text_heads != 0) fail("hidden size must be divisible by text_heads");
  if (graph_heads <= 0 || hidden % graph_heads != 0) fail("hidden size must be divisible by graph_heads");
  if (text_layers < 0 || kgnn_layers < 0 || hypergraph_layers < 0) fail("layer counts must be non-negative");
  if (windows.empty()) fail("at least one window is required");
  for (const Window& w : windows) {
    if (w.past < 1 || w.future < 1) fail("window sizes must be >= 1");
  }
  if (max_utterances < 1) fail("max_utterances must be positive");
  if (ablations.disable_igm && ablations.disable_hm) {
    fail("disabling both the inception graph and hypergraph modules leaves fusion without input");
  }
}

ModelConfig model_config_for(const Dataset& dataset) {
  ModelConfig cfg;
  cfg.dims = dataset.dims;
  cfg.num_speakers = dataset.num_speakers;
  cfg.num_classes = dataset.num_classes;
  return cfg;
}

ConxGnn::ConxGnn(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  EncoderConfig enc;
  enc.dims = config_.dims;
  enc.num_speakers = config_.num_speakers;
  enc.hidden = config_.hidden;
  enc.text_layers = config_.text_layers;
  enc.text_heads = config_.text_heads;
  encoder_ = init_encoder(enc, rng);
  igm_ = init_igm(config_.hidden, config_.windows.size(), config_.kgnn_layers, config_.graph_heads, rng);
  hypergraph_ = init_hypergraph(config_.hidden, config_.hypergraph_layers, config_.max_utterances, rng);
  fusion_ = init_fusion(config_.hidden, config_.resolved_attention_dim(), config_.resolved_embedding_dim(),
                        config_.num_classes, rng);
}

std::size_t ConxGnn::parameter_count() const {
  std::size_t n = 0;
  visit([&n](const Parameter& p) { n += static_cast<std::size_t>(p.value.size()); });
  return n;
}

ForwardResult ConxGnn::forward(Tape& tape, const Conversation& conv) const {
  return forward_impl(tape, conv, std::nullopt);
}

ForwardResult ConxGnn::forward(Tape& tape, const Conversation& conv, std::span<const RelationalGraph> graphs) const {
  return forward_impl(tape, conv, graphs);
}

ForwardResult ConxGnn::forward_impl(Tape& tape, const Conversation& conv,
                                    std::optional<std::span<const RelationalGraph>> graphs) const {
  const Ablations& ab = config_.ablations;
  ForwardResult out;
  out.reps = encode(tape, conv, encoder_);
  const Index len = static_cast<Index>(conv.size());
  const Index d = config_.hidden;

  ModalityVars igm_out;
  if (ab.disable_igm) {
    for (Modality m : kModalities) igm_out[m] = tape.constant(Matrix::Zero(len, d));
  } else {
    if (graphs) {
      out.graphs.assign(graphs->begin(), graphs->end());
    } else {
      out.graphs = build_graphs(values_of(out.reps), config_.windows);
    }
    igm_out = igm_forward(tape, out.reps, out.graphs, igm_);
  }

  ModalityVars hm_out;
  if (ab.disable_hm) {
    for (Modality m : kModalities) hm_out[m] = tape.constant(Matrix::Zero(len, d));
  } else {
    hm_out = hm_forward(tape, out.reps, build_incidence(len), hypergraph_);
  }

  ModalityVars fused;
  for (Modality m : kModalities) fused[m] = fuse_branch_outputs(tape, igm_out[m], hm_out[m], fusion_);

  Var text = fused.text;
  if (!ab.disable_crossmodal) {
    text = text + cross_modal_attention(tape, fused.visual, fused.text, fusion_) +
           cross_modal_attention(tape, fused.audio, fused.text, fusion_);
  }
  ClassifierOutput head = classify_head(tape, text, fused.audio, fused.visual, fusion_);
  out.probs = head.probs;
  out.embeddings = head.embeddings;
  out.predictions = std::move(head.predictions);
  return out;
}

std::vector<std::size_t> ConxGnn::predict(const Conversation& conv) const {
  Tape tape(false);
  return forward(tape, conv).predictions;
}

}  // namespace conxgnn
