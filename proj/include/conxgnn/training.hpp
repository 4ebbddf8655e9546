#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conxgnn/data.hpp"
#include "conxgnn/losses.hpp"
#include "conxgnn/model.hpp"

namespace conxgnn {

// ---------------------------------------------------------------------------
// Optimizer

struct AdamMoments {
  Matrix first;
  Matrix second;
};

/// Bias-corrected Adam. Moments are keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr = 4e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Starts a new step; every update() until the next begin_step() shares
  /// the same bias correction.
  void begin_step() { ++step_; }
  /// Throws std::runtime_error naming the parameter if `grad` has a NaN or
  /// infinite entry.
  void update(Parameter& param, const Matrix& grad);

  long step() const { return step_; }
  double lr() const { return lr_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }
  const std::map<std::string, AdamMoments>& moments() const { return moments_; }

  void restore(long step, std::map<std::string, AdamMoments> moments);

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<std::size_t> support;
};

/// Accuracy, per-class F1 (0 when precision + recall is 0) and the
/// support-weighted mean F1.
Metrics compute_metrics(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                        std::size_t num_classes);

/// Throws std::invalid_argument for a split with no utterances.
Metrics evaluate(const ConxGnn& model, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lr = 4e-4;
  int epochs = 40;
  double beta = 0.999;
  LossConfig loss;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  Index hidden = 64;
  std::vector<Window> windows{{10, 9}, {5, 3}, {3, 2}};
  int kgnn_layers = 2;
  int hypergraph_layers = 4;
  Ablations ablations;

  void validate() const;
  ModelConfig model_config(const Dataset& train) const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
  std::optional<double> val_weighted_f1;
};

/// One JSON object per line.
std::string to_json_line(const EpochMetrics& m);

/// Stepwise trainer; `train()` below runs it to completion.
class Trainer {
 public:
  /// Class weights come from `train` only. `val` may be null.
  Trainer(const Dataset& train, const Dataset* val, TrainConfig config);

  /// One pass over the shuffled training conversations.
  EpochMetrics run_epoch();

  const ConxGnn& model() const { return model_; }
  ConxGnn& model() { return model_; }
  const Adam& optimizer() const { return adam_; }
  Adam& optimizer() { return adam_; }
  const ClassWeights& class_weights() const { return weights_; }
  const TrainConfig& config() const { return config_; }
  int epoch() const { return epoch_; }
  std::mt19937_64& rng() { return rng_; }
  const std::mt19937_64& rng() const { return rng_; }

  /// Replaces model/optimizer/epoch/rng, e.g. from a checkpoint.
  void restore(ConxGnn model, Adam adam, int epoch, const std::mt19937_64& rng);

  const std::optional<ConxGnn>& best_model() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  double train_batch(std::span<const std::size_t> indices, std::vector<std::size_t>& labels,
                     std::vector<std::size_t>& predictions);

  const Dataset& train_;
  const Dataset* val_;
  TrainConfig config_;
  ClassWeights weights_;
  ConxGnn model_;
  Adam adam_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  std::optional<ConxGnn> best_;
  double best_score_ = -1.0;
  int best_epoch_ = 0;
};

struct TrainResult {
  ConxGnn final_model;
  /// Highest validation weighted F1; equals final_model without a val split.
  ConxGnn best_model;
  int best_epoch = 0;
  std::vector<EpochMetrics> log;
};

/// Optional `metrics_log` receives one JSON line per epoch.
TrainResult train(const Dataset& train, const Dataset* val, const TrainConfig& config,
                  std::ostream* metrics_log = nullptr);

}  // namespace conxgnn
