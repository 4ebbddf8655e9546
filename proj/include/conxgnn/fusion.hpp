#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "conxgnn/encoder.hpp"
#include "conxgnn/tensor.hpp"

namespace conxgnn {

struct FusionParams {
  /// d_att x 2d_h and 1 x d_att
  Parameter project, project_bias;
  /// d_att x d_att each
  Parameter query, key, value;
  /// d_z x 3d_att and 1 x d_z
  Parameter aggregate, aggregate_bias;
  /// C x d_z and 1 x C
  Parameter classifier, classifier_bias;
  /// 1 / sqrt(d_h) applied to cross-modal attention scores.
  double score_scale = 1.0;

  template <typename F>
  void visit(F&& f) {
    for (Parameter* p : {&project, &project_bias, &query, &key, &value, &aggregate, &aggregate_bias,
                         &classifier, &classifier_bias}) {
      f(*p);
    }
  }
};

FusionParams init_fusion(Index hidden, Index attention_dim, Index embedding_dim, std::size_t num_classes,
                         std::mt19937_64& rng);

/// F = [P | Q] W6^T + b6, row-wise.
Var fuse_branch_outputs(Tape& tape, const Var& igm_out, const Var& hm_out, const FusionParams& params);

/// For each row i of `source`: softmax_j((W_Q f_i)^T (W_K t_j) * scale)
/// weighted sum of W_V t_j over all rows j of `text`.
Var cross_modal_attention(Tape& tape, const Var& source, const Var& text, const FusionParams& params);

struct ClassifierOutput {
  Var embeddings;  // z, L x d_z
  Var logits;
  Var probs;
  std::vector<std::size_t> predictions;
};

/// z = ReLU([F^t' | F^a | F^v] W_z^T + b_z), probs = softmax(z W7^T + b7).
ClassifierOutput classify_head(Tape& tape, const Var& fused_text, const Var& audio, const Var& visual,
                               const FusionParams& params);

/// Row-wise argmax; ties resolve to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& scores);

}  // namespace conxgnn
