#include "conxgnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "conxgnn/losses.hpp"

namespace conxgnn {

double gradient_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

double directional_difference(const std::function<double()>& f, Matrix& x, const Matrix& direction, double epsilon) {
  const Matrix saved = x;
  x = saved + epsilon * direction;
  const double plus = f();
  x = saved - epsilon * direction;
  const double minus = f();
  x = saved;
  return (plus - minus) / (2.0 * epsilon);
}

namespace {

struct Instance {
  Dataset data;
  ModelConfig config;
  std::uint64_t model_seed = 0;
};

Instance make_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(2, 4);
  std::uniform_int_distribution<int> small(1, 2);
  SyntheticConfig syn;
  syn.num_classes = 3;
  syn.num_speakers = 2;
  syn.dims = {5, 4, 3};
  syn.n_conversations = 1;
  syn.min_length = syn.max_length = len(rng);
  syn.class_probs = {0.4, 0.35, 0.25};
  syn.separation = 1.5;
  syn.noise = 0.5;

  Instance inst;
  inst.data = generate_synthetic(syn, rng());
  inst.config = model_config_for(inst.data);
  inst.config.hidden = 8;
  inst.config.text_layers = 1;
  inst.config.text_heads = 2;
  inst.config.graph_heads = 2;
  inst.config.windows = {{small(rng), small(rng)}, {small(rng) + 1, small(rng)}};
  inst.config.kgnn_layers = small(rng);
  inst.config.hypergraph_layers = small(rng);
  inst.config.max_utterances = 4;
  inst.model_seed = rng();
  return inst;
}

Var instance_loss(Tape& tape, const ConxGnn& model, const Conversation& conv,
                  const std::vector<RelationalGraph>& graphs, const ClassWeights& weights, const LossConfig& loss) {
  ForwardResult r = model.forward(tape, conv, graphs);
  DialogueOutputs d{r.probs, r.embeddings, {}};
  for (const auto& u : conv.utterances) d.labels.push_back(u.label);
  std::span<const DialogueOutputs> batch(&d, 1);
  return total_loss(cbce_loss(batch, weights), cbfc_loss(batch, weights, loss.temperature), loss.mu);
}

}  // namespace

GradCheckReport run_gradient_suite(const GradCheckConfig& config) {
  GradCheckReport report;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const LossConfig loss;

  for (int k = 0; k < config.instances; ++k) {
    Instance inst = make_instance(rng);
    ConxGnn model(inst.config, inst.model_seed);
    const Conversation& conv = inst.data.conversations.front();
    // All classes get a positive weight even if absent from this instance.
    std::vector<std::size_t> counts = class_counts(inst.data);
    for (auto& c : counts) c += 1;
    const ClassWeights weights = ClassWeights::from_counts(counts, 0.9);

    std::vector<RelationalGraph> graphs;
    {
      Tape probe(false);
      graphs = build_graphs(values_of(encode(probe, conv, model.encoder())), inst.config.windows);
    }

    Tape tape;
    Var loss_var = instance_loss(tape, model, conv, graphs, weights, loss);
    tape.backward(loss_var);
    auto f = [&]() {
      Tape t(false);
      return instance_loss(t, model, conv, graphs, weights, loss).scalar();
    };

    model.visit([&](Parameter& p) {
      const Matrix* g = tape.gradient(p);
      const Matrix grad = g ? *g : Matrix::Zero(p.value.rows(), p.value.cols());
      ++report.parameters_checked;
      auto record = [&](const std::string& probe, double analytic, double numeric) {
        ++report.probes;
        const double err = gradient_relative_error(analytic, numeric);
        report.max_relative_error = std::max(report.max_relative_error, err);
        if (!(err <= config.tolerance)) report.failures.push_back({k, p.name, probe, analytic, numeric, err});
      };

      Matrix dir = Matrix::NullaryExpr(p.value.rows(), p.value.cols(), [&]() { return normal(rng); });
      dir /= std::max(dir.norm(), 1e-12);
      record("direction", grad.cwiseProduct(dir).sum(), directional_difference(f, p.value, dir, config.epsilon));

      std::uniform_int_distribution<Index> row(0, p.value.rows() - 1), col(0, p.value.cols() - 1);
      for (int e = 0; e < config.entries_per_parameter; ++e) {
        const Index r = row(rng), c = col(rng);
        Matrix unit = Matrix::Zero(p.value.rows(), p.value.cols());
        unit(r, c) = 1.0;
        record("entry(" + std::to_string(r) + "," + std::to_string(c) + ")", grad(r, c),
               directional_difference(f, p.value, unit, config.epsilon));
      }
    });
  }
  return report;
}

}  // namespace conxgnn
