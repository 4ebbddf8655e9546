#include "conxgnn/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "conxgnn/init.hpp"

namespace conxgnn {

Var& ModalityVars::operator[](Modality m) {
  switch (m) {
    case Modality::text: return text;
    case Modality::audio: return audio;
    case Modality::visual: return visual;
  }
  throw std::invalid_argument("unknown modality");
}

const Var& ModalityVars::operator[](Modality m) const {
  return const_cast<ModalityVars&>(*this)[m];
}

Matrix& ModalityMatrices::operator[](Modality m) {
  switch (m) {
    case Modality::text: return text;
    case Modality::audio: return audio;
    case Modality::visual: return visual;
  }
  throw std::invalid_argument("unknown modality");
}

const Matrix& ModalityMatrices::operator[](Modality m) const {
  return const_cast<ModalityMatrices&>(*this)[m];
}

ModalityMatrices values_of(const ModalityVars& vars) {
  return {vars.text.value(), vars.audio.value(), vars.visual.value()};
}

EncoderParams init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
  const Index d = cfg.hidden;
  if (d <= 0) throw std::invalid_argument("hidden size must be positive");
  if (cfg.text_heads <= 0 || d % cfg.text_heads != 0) {
    throw std::invalid_argument("hidden size must be divisible by the text head count");
  }
  const Index ff = d * cfg.ff_multiplier;
  EncoderParams p;
  p.text_heads = cfg.text_heads;
  p.text_in = xavier_parameter("encoder.text.in.weight", d, static_cast<Index>(cfg.dims.text), rng);
  p.text_in_bias = zero_parameter("encoder.text.in.bias", 1, d);
  for (int l = 0; l < cfg.text_layers; ++l) {
    const std::string pre = "encoder.text.layer" + std::to_string(l) + ".";
    TransformerLayerParams layer;
    layer.norm1_gain = constant_parameter(pre + "norm1.gain", 1, d, 1.0);
    layer.norm1_bias = zero_parameter(pre + "norm1.bias", 1, d);
    layer.query = xavier_parameter(pre + "attn.query", d, d, rng);
    layer.key = xavier_parameter(pre + "attn.key", d, d, rng);
    layer.value = xavier_parameter(pre + "attn.value", d, d, rng);
    layer.out = xavier_parameter(pre + "attn.out", d, d, rng);
    layer.out_bias = zero_parameter(pre + "attn.out_bias", 1, d);
    layer.norm2_gain = constant_parameter(pre + "norm2.gain", 1, d, 1.0);
    layer.norm2_bias = zero_parameter(pre + "norm2.bias", 1, d);
    layer.ff_in = xavier_parameter(pre + "ff.in", ff, d, rng);
    layer.ff_in_bias = zero_parameter(pre + "ff.in_bias", 1, ff);
    layer.ff_out = xavier_parameter(pre + "ff.out", d, ff, rng);
    layer.ff_out_bias = zero_parameter(pre + "ff.out_bias", 1, d);
    p.text_layers.push_back(std::move(layer));
  }
  p.text_norm_gain = constant_parameter("encoder.text.norm.gain", 1, d, 1.0);
  p.text_norm_bias = zero_parameter("encoder.text.norm.bias", 1, d);
  p.audio_proj = xavier_parameter("encoder.audio.weight", d, static_cast<Index>(cfg.dims.audio), rng);
  p.audio_bias = zero_parameter("encoder.audio.bias", 1, d);
  p.visual_proj = xavier_parameter("encoder.visual.weight", d, static_cast<Index>(cfg.dims.visual), rng);
  p.visual_bias = zero_parameter("encoder.visual.bias", 1, d);
  p.speaker_table = xavier_parameter("encoder.speaker_table", static_cast<Index>(cfg.num_speakers), d, rng);
  return p;
}

Matrix sinusoidal_positions(Index length, Index dim) {
  Matrix pe(length, dim);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Matrix stack_features(const Conversation& conv, Modality m) {
  if (conv.utterances.empty()) throw std::invalid_argument("conversation has no utterances");
  const Index dim = conv.utterances.front().features(m).size();
  Matrix out(static_cast<Index>(conv.size()), dim);
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const Vector& f = conv.utterances[i].features(m);
    if (f.size() != dim) throw std::invalid_argument("ragged feature dimensions within a conversation");
    out.row(static_cast<Index>(i)) = f.transpose();
  }
  return out;
}

Var self_attention(const Var& x, const Var& query, const Var& key, const Var& value, int heads) {
  const Index d = query.rows();
  const Index dh = d / heads;
  Var q = matmul_transposed(x, query);
  Var k = matmul_transposed(x, key);
  Var v = matmul_transposed(x, value);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var attn = softmax_rows(scale * matmul_transposed(qh, kh));
    outs.push_back(attn * vh);
  }
  return heads == 1 ? outs.front() : concat_cols(outs);
}

namespace {

void check_dims(const Matrix& features, const Parameter& proj, const char* modality) {
  if (features.cols() != proj.value.cols()) {
    throw std::invalid_argument(std::string("encoder: ") + modality + " feature dimension " +
                                std::to_string(features.cols()) + " does not match parameter width " +
                                std::to_string(proj.value.cols()));
  }
}

Var transformer_layer(Tape& tape, const Var& x, const TransformerLayerParams& p, int heads) {
  Var h = layer_norm_rows(x, tape.param(p.norm1_gain), tape.param(p.norm1_bias));
  Var attn = self_attention(h, tape.param(p.query), tape.param(p.key), tape.param(p.value), heads);
  Var y = x + linear(attn, tape.param(p.out), tape.param(p.out_bias));
  Var h2 = layer_norm_rows(y, tape.param(p.norm2_gain), tape.param(p.norm2_bias));
  Var ff = linear(relu(linear(h2, tape.param(p.ff_in), tape.param(p.ff_in_bias))), tape.param(p.ff_out),
                  tape.param(p.ff_out_bias));
  return y + ff;
}

}  // namespace

ModalityVars encode_modalities(Tape& tape, const Conversation& conv, const EncoderParams& params) {
  Matrix text = stack_features(conv, Modality::text);
  Matrix audio = stack_features(conv, Modality::audio);
  Matrix visual = stack_features(conv, Modality::visual);
  check_dims(text, params.text_in, "text");
  check_dims(audio, params.audio_proj, "audio");
  check_dims(visual, params.visual_proj, "visual");

  const Index len = text.rows();
  Var x = linear(tape.constant(std::move(text)), tape.param(params.text_in), tape.param(params.text_in_bias));
  x = x + tape.constant(sinusoidal_positions(len, params.hidden()));
  for (const auto& layer : params.text_layers) x = transformer_layer(tape, x, layer, params.text_heads);
  x = layer_norm_rows(x, tape.param(params.text_norm_gain), tape.param(params.text_norm_bias));

  ModalityVars out;
  out.text = x;
  out.audio = linear(tape.constant(std::move(audio)), tape.param(params.audio_proj), tape.param(params.audio_bias));
  out.visual = linear(tape.constant(std::move(visual)), tape.param(params.visual_proj), tape.param(params.visual_bias));
  return out;
}

Var add_speaker(const Var& x, std::span<const std::size_t> speaker_ids, const Var& table) {
  if (static_cast<Index>(speaker_ids.size()) != x.rows()) {
    throw std::invalid_argument("add_speaker: one speaker id per row required");
  }
  std::vector<Index> rows(speaker_ids.size());
  for (std::size_t i = 0; i < speaker_ids.size(); ++i) {
    if (speaker_ids[i] >= static_cast<std::size_t>(table.rows())) {
      throw std::out_of_range("add_speaker: speaker id " + std::to_string(speaker_ids[i]) +
                              " out of range for " + std::to_string(table.rows()) + " speakers");
    }
    rows[i] = static_cast<Index>(speaker_ids[i]);
  }
  return x + gather_rows(table, rows);
}

ModalityVars encode(Tape& tape, const Conversation& conv, const EncoderParams& params) {
  ModalityVars x = encode_modalities(tape, conv, params);
  std::vector<std::size_t> speakers;
  speakers.reserve(conv.size());
  for (const auto& u : conv.utterances) speakers.push_back(u.speaker_id);
  Var table = tape.param(params.speaker_table);
  return {add_speaker(x.text, speakers, table), add_speaker(x.audio, speakers, table),
          add_speaker(x.visual, speakers, table)};
}

}  // namespace conxgnn
