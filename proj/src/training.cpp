#include "conxgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace conxgnn {

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
}

void Adam::update(Parameter& param, const Matrix& grad) {
  if (grad.rows() != param.value.rows() || grad.cols() != param.value.cols()) {
    throw std::invalid_argument("Adam: gradient shape mismatch for '" + param.name + "'");
  }
  if (!grad.allFinite()) {
    throw std::runtime_error("Adam: non-finite gradient for parameter '" + param.name + "'");
  }
  if (step_ == 0) throw std::logic_error("Adam: update() before begin_step()");
  auto [it, inserted] = moments_.try_emplace(param.name);
  AdamMoments& m = it->second;
  if (inserted) {
    m.first = Matrix::Zero(grad.rows(), grad.cols());
    m.second = Matrix::Zero(grad.rows(), grad.cols());
  }
  m.first = beta1_ * m.first + (1.0 - beta1_) * grad;
  m.second = beta2_ * m.second + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  param.value.array() -= lr_ * (m.first.array() / c1) / ((m.second.array() / c2).sqrt() + eps_);
}

void Adam::restore(long step, std::map<std::string, AdamMoments> moments) {
  step_ = step;
  moments_ = std::move(moments);
}

// ---------------------------------------------------------------------------
// Metrics

Metrics compute_metrics(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                        std::size_t num_classes) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("metrics: label/prediction count mismatch");
  if (labels.empty()) throw std::invalid_argument("metrics: empty split");
  std::vector<std::size_t> tp(num_classes, 0), predicted(num_classes, 0);
  Metrics m;
  m.support.assign(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw std::out_of_range("metrics: class index out of range");
    }
    ++m.support[labels[i]];
    ++predicted[predictions[i]];
    if (labels[i] == predictions[i]) {
      ++tp[labels[i]];
      ++correct;
    }
  }
  const auto total = static_cast<double>(labels.size());
  m.accuracy = static_cast<double>(correct) / total;
  m.per_class_f1.assign(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double precision = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    const double recall = m.support[c] ? static_cast<double>(tp[c]) / static_cast<double>(m.support[c]) : 0.0;
    if (precision + recall > 0.0) m.per_class_f1[c] = 2.0 * precision * recall / (precision + recall);
    m.weighted_f1 += static_cast<double>(m.support[c]) / total * m.per_class_f1[c];
  }
  return m;
}

Metrics evaluate(const ConxGnn& model, const Dataset& dataset) {
  std::vector<std::size_t> labels, predictions;
  for (const auto& conv : dataset.conversations) {
    auto p = model.predict(conv);
    predictions.insert(predictions.end(), p.begin(), p.end());
    for (const auto& u : conv.utterances) labels.push_back(u.label);
  }
  return compute_metrics(labels, predictions, dataset.num_classes);
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in [0, 1)");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  loss.validate();
  if (ablations.disable_igm && ablations.disable_hm) {
    throw std::invalid_argument("disabling both the inception graph and hypergraph modules leaves fusion without input");
  }
}

ModelConfig TrainConfig::model_config(const Dataset& train) const {
  ModelConfig cfg = model_config_for(train);
  cfg.hidden = hidden;
  cfg.windows = windows;
  cfg.kgnn_layers = kgnn_layers;
  cfg.hypergraph_layers = hypergraph_layers;
  cfg.ablations = ablations;
  std::size_t longest = 0;
  for (const auto& c : train.conversations) longest = std::max(longest, c.size());
  cfg.max_utterances = std::max<Index>(cfg.max_utterances, static_cast<Index>(longest));
  return cfg;
}

std::string to_json_line(const EpochMetrics& m) {
  nlohmann::json j = {{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"train_accuracy", m.train_accuracy}};
  if (m.val_accuracy) j["val_accuracy"] = *m.val_accuracy;
  if (m.val_weighted_f1) j["val_weighted_f1"] = *m.val_weighted_f1;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

const TrainConfig& checked(const TrainConfig& cfg, const Dataset& train) {
  cfg.validate();
  if (train.total_utterances() == 0) throw std::invalid_argument("training split is empty");
  return cfg;
}

constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ULL;

}  // namespace

Trainer::Trainer(const Dataset& train, const Dataset* val, TrainConfig config)
    : train_(train),
      val_(val),
      config_(checked(config, train)),
      weights_(config_.ablations.disable_reweight ? ClassWeights::uniform(train.num_classes)
                                                  : ClassWeights::from_counts(class_counts(train), config_.beta)),
      model_(config_.model_config(train), config_.seed),
      adam_(config_.lr),
      rng_(config_.seed ^ kShuffleStream) {}

double Trainer::train_batch(std::span<const std::size_t> indices, std::vector<std::size_t>& labels,
                            std::vector<std::size_t>& predictions) {
  Tape tape;
  std::vector<DialogueOutputs> outputs;
  outputs.reserve(indices.size());
  for (std::size_t idx : indices) {
    const Conversation& conv = train_.conversations[idx];
    ForwardResult r = model_.forward(tape, conv);
    DialogueOutputs d{r.probs, r.embeddings, {}};
    for (const auto& u : conv.utterances) d.labels.push_back(u.label);
    labels.insert(labels.end(), d.labels.begin(), d.labels.end());
    predictions.insert(predictions.end(), r.predictions.begin(), r.predictions.end());
    outputs.push_back(std::move(d));
  }
  Var loss = total_loss(cbce_loss(outputs, weights_), cbfc_loss(outputs, weights_, config_.loss.temperature),
                        config_.loss.mu);
  tape.backward(loss);
  adam_.begin_step();
  model_.visit([&](Parameter& p) {
    if (const Matrix* g = tape.gradient(p)) adam_.update(p, *g);
  });
  return loss.scalar();
}

EpochMetrics Trainer::run_epoch() {
  std::vector<std::size_t> order(train_.conversations.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);

  std::vector<std::size_t> labels, predictions;
  double loss_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    const std::size_t before = labels.size();
    const double loss = train_batch(std::span(order).subspan(start, end - start), labels, predictions);
    loss_sum += loss * static_cast<double>(labels.size() - before);
    counted += labels.size() - before;
  }
  ++epoch_;

  EpochMetrics m;
  m.epoch = epoch_;
  m.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(counted, 1));
  m.train_accuracy = compute_metrics(labels, predictions, train_.num_classes).accuracy;
  if (val_ != nullptr && val_->total_utterances() > 0) {
    const Metrics vm = evaluate(model_, *val_);
    m.val_accuracy = vm.accuracy;
    m.val_weighted_f1 = vm.weighted_f1;
    if (vm.weighted_f1 > best_score_) {
      best_score_ = vm.weighted_f1;
      best_ = model_;
      best_epoch_ = epoch_;
    }
  }
  return m;
}

void Trainer::restore(ConxGnn model, Adam adam, int epoch, const std::mt19937_64& rng) {
  if (!(model.config() == model_.config())) throw std::invalid_argument("restore: model configuration differs");
  model_ = std::move(model);
  adam_ = std::move(adam);
  epoch_ = epoch;
  rng_ = rng;
}

TrainResult train(const Dataset& train_set, const Dataset* val, const TrainConfig& config, std::ostream* metrics_log) {
  Trainer trainer(train_set, val, config);
  std::vector<EpochMetrics> log;
  for (int e = 0; e < config.epochs; ++e) {
    log.push_back(trainer.run_epoch());
    if (metrics_log != nullptr) *metrics_log << to_json_line(log.back()) << '\n';
  }
  const bool have_best = trainer.best_model().has_value();
  return TrainResult{trainer.model(), have_best ? *trainer.best_model() : trainer.model(),
                     have_best ? trainer.best_epoch() : trainer.epoch(), std::move(log)};
}

}  // namespace conxgnn
