#include "conxgnn/fusion.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "conxgnn/init.hpp"

namespace conxgnn {

FusionParams init_fusion(Index hidden, Index attention_dim, Index embedding_dim, std::size_t num_classes,
                         std::mt19937_64& rng) {
  const auto classes = static_cast<Index>(num_classes);
  FusionParams p;
  p.project = xavier_parameter("fusion.project", attention_dim, 2 * hidden, rng);
  p.project_bias = zero_parameter("fusion.project_bias", 1, attention_dim);
  p.query = xavier_parameter("fusion.query", attention_dim, attention_dim, rng);
  p.key = xavier_parameter("fusion.key", attention_dim, attention_dim, rng);
  p.value = xavier_parameter("fusion.value", attention_dim, attention_dim, rng);
  p.aggregate = xavier_parameter("fusion.aggregate", embedding_dim, 3 * attention_dim, rng);
  p.aggregate_bias = zero_parameter("fusion.aggregate_bias", 1, embedding_dim);
  p.classifier = xavier_parameter("fusion.classifier", classes, embedding_dim, rng);
  p.classifier_bias = zero_parameter("fusion.classifier_bias", 1, classes);
  p.score_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  return p;
}

Var fuse_branch_outputs(Tape& tape, const Var& igm_out, const Var& hm_out, const FusionParams& params) {
  if (igm_out.rows() != hm_out.rows()) throw std::invalid_argument("fuse_branch_outputs: row count mismatch");
  const std::array<Var, 2> parts = {igm_out, hm_out};
  return linear(concat_cols(parts), tape.param(params.project), tape.param(params.project_bias));
}

Var cross_modal_attention(Tape& tape, const Var& source, const Var& text, const FusionParams& params) {
  if (source.rows() != text.rows()) throw std::invalid_argument("cross_modal_attention: row count mismatch");
  Var q = matmul_transposed(source, tape.param(params.query));
  Var k = matmul_transposed(text, tape.param(params.key));
  Var v = matmul_transposed(text, tape.param(params.value));
  Var alpha = softmax_rows(params.score_scale * matmul_transposed(q, k));
  return alpha * v;
}

std::vector<std::size_t> argmax_rows(const Matrix& scores) {
  std::vector<std::size_t> out(static_cast<std::size_t>(scores.rows()));
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

ClassifierOutput classify_head(Tape& tape, const Var& fused_text, const Var& audio, const Var& visual,
                               const FusionParams& params) {
  const std::array<Var, 3> parts = {fused_text, audio, visual};
  ClassifierOutput out;
  out.embeddings = relu(linear(concat_cols(parts), tape.param(params.aggregate), tape.param(params.aggregate_bias)));
  out.logits = linear(out.embeddings, tape.param(params.classifier), tape.param(params.classifier_bias));
  out.probs = softmax_rows(out.logits);
  out.predictions = argmax_rows(out.logits.value());
  return out;
}

}  // namespace conxgnn
