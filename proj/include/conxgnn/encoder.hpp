#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "conxgnn/data.hpp"
#include "conxgnn/tensor.hpp"

namespace conxgnn {

/// One Var per modality, each L x d.
struct ModalityVars {
  Var text;
  Var audio;
  Var visual;

  Var& operator[](Modality m);
  const Var& operator[](Modality m) const;
};

/// Plain-matrix counterpart of ModalityVars.
struct ModalityMatrices {
  Matrix text;
  Matrix audio;
  Matrix visual;

  Matrix& operator[](Modality m);
  const Matrix& operator[](Modality m) const;
};

ModalityMatrices values_of(const ModalityVars& vars);

struct EncoderConfig {
  FeatureDims dims;
  std::size_t num_speakers = 1;
  Index hidden = 64;
  int text_layers = 2;
  int text_heads = 4;
  int ff_multiplier = 4;
};

/// Pre-norm transformer block over the utterance sequence.
struct TransformerLayerParams {
  Parameter norm1_gain, norm1_bias;
  Parameter query, key, value, out, out_bias;
  Parameter norm2_gain, norm2_bias;
  Parameter ff_in, ff_in_bias, ff_out, ff_out_bias;

  template <typename F>
  void visit(F&& f) {
    for (Parameter* p : {&norm1_gain, &norm1_bias, &query, &key, &value, &out, &out_bias,
                         &norm2_gain, &norm2_bias, &ff_in, &ff_in_bias, &ff_out, &ff_out_bias}) {
      f(*p);
    }
  }
};

struct EncoderParams {
  int text_heads = 4;
  Parameter text_in, text_in_bias;
  std::vector<TransformerLayerParams> text_layers;
  Parameter text_norm_gain, text_norm_bias;
  Parameter audio_proj, audio_bias;
  Parameter visual_proj, visual_bias;
  /// |S| x d_h
  Parameter speaker_table;

  Index hidden() const { return text_in.value.rows(); }

  template <typename F>
  void visit(F&& f) {
    f(text_in);
    f(text_in_bias);
    for (auto& layer : text_layers) layer.visit(f);
    for (Parameter* p : {&text_norm_gain, &text_norm_bias, &audio_proj, &audio_bias, &visual_proj,
                         &visual_bias, &speaker_table}) {
      f(*p);
    }
  }
};

EncoderParams init_encoder(const EncoderConfig& config, std::mt19937_64& rng);

/// Row i holds the sinusoidal encoding of position i.
Matrix sinusoidal_positions(Index length, Index dim);

/// L x d_m feature matrix for one modality of a conversation.
Matrix stack_features(const Conversation& conv, Modality m);

/// X^t from the text transformer over the utterance sequence; X^a and X^v
/// from per-utterance affine maps.
ModalityVars encode_modalities(Tape& tape, const Conversation& conv, const EncoderParams& params);

/// H[i] = X[i] + table[speaker_ids[i]].
Var add_speaker(const Var& x, std::span<const std::size_t> speaker_ids, const Var& table);

/// Speaker- and context-aware representations for all three modalities.
ModalityVars encode(Tape& tape, const Conversation& conv, const EncoderParams& params);

/// Multi-head scaled dot-product self-attention over rows of `x`.
Var self_attention(const Var& x, const Var& query, const Var& key, const Var& value, int heads);

}  // namespace conxgnn
